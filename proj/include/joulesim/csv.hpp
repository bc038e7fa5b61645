#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace joulesim {

/// Minimal CSV emitter. Data rows go to the stream verbatim with '\n'
/// endings and fixed numeric formatting, so identical inputs produce
/// byte-identical files.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    void comment(const std::string& text) { out_ << "# " << text << "\n"; }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    static std::string num(double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return buf;
    }

    static std::string num(long long v) { return std::to_string(v); }
    static std::string num(int v) { return std::to_string(v); }

private:
    std::ostream& out_;
};

} // namespace joulesim
