#pragma once

// Minimal CSV output. Column names carry their unit in brackets, e.g. "Q_true[fraction]".
// Numbers are printed with 17 significant digits so files are reproducible bit for bit.

#include <concepts>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "resmin/errors.hpp"

namespace resmin {

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
        : path_(path), out_(path), width_(header.size()) {
        if (!out_) throw IoFailure("cannot write " + path.string());
        write_row(header);
    }

    CsvWriter& cell(double v) { return push(format_number(v)); }
    template <std::integral I>
        requires(!std::same_as<I, bool>)
    CsvWriter& cell(I v) {
        return push(std::to_string(v));
    }
    CsvWriter& cell(bool v) { return push(v ? "1" : "0"); }
    CsvWriter& cell(const std::string& v) { return push(v); }
    CsvWriter& cell(const char* v) { return push(v); }

    void end_row() {
        if (row_.size() != width_) throw std::logic_error("CSV row width differs from the header");
        write_row(row_);
        row_.clear();
    }

    void close() {
        out_.close();
        if (!out_) throw IoFailure("failed writing " + path_.string());
    }

private:
    CsvWriter& push(std::string s) {
        row_.push_back(std::move(s));
        return *this;
    }

    void write_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t width_;
    std::vector<std::string> row_;
};

} // namespace resmin
