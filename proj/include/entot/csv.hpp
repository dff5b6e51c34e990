#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace entot::csv {

// All numbers are emitted with 12 significant digits so that re-running a
// config reproduces the file byte for byte.
inline std::string format(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    void header(const std::vector<std::string>& names) {
        write_strings(names);
    }

    void row(const std::vector<double>& values) {
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values) cells.push_back(format(v));
        write_strings(cells);
    }

private:
    void write_strings(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) os_ << ',';
            os_ << cells[i];
        }
        os_ << '\n';
    }

    std::ostream& os_;
};

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    return out;
}

} // namespace entot::csv
