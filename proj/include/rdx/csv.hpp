#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "rdx/types.hpp"

namespace rdx {
namespace csv {

/// Minimal CSV table: a header and rows of doubles. Numbers are written
/// with max_digits10 precision so round-trips are value-exact.
class Table {
  public:
    Table() = default;
    explicit Table(std::vector<std::string> header) : header_(std::move(header)) {
        for (std::size_t i = 0; i < header_.size(); ++i) index_[header_[i]] = i;
    }

    void add_row(const std::vector<double>& row) {
        if (row.size() != header_.size())
            throw NonpositiveInput("csv row width does not match header");
        rows_.push_back(row);
    }

    std::size_t n_rows() const { return rows_.size(); }
    std::size_t n_cols() const { return header_.size(); }
    const std::vector<std::string>& header() const { return header_; }

    double at(std::size_t row, const std::string& col) const {
        return rows_[row][col_index(col)];
    }
    std::size_t col_index(const std::string& col) const {
        auto it = index_.find(col);
        if (it == index_.end()) throw NonpositiveInput("csv column not found: " + col);
        return it->second;
    }
    bool has_col(const std::string& col) const { return index_.count(col) > 0; }

    void write(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw NonpositiveInput("cannot open for writing: " + path);
        out.precision(17);
        for (std::size_t i = 0; i < header_.size(); ++i)
            out << header_[i] << (i + 1 < header_.size() ? ',' : '\n');
        for (const auto& row : rows_) {
            for (std::size_t i = 0; i < row.size(); ++i)
                out << row[i] << (i + 1 < row.size() ? ',' : '\n');
        }
    }

    static Table read(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw NonpositiveInput("cannot open for reading: " + path);
        std::string line;
        if (!std::getline(in, line)) throw NonpositiveInput("empty csv: " + path);
        Table t(split_header(line));
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<double> row;
            row.reserve(t.n_cols());
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
            t.add_row(row);
        }
        return t;
    }

  private:
    static std::vector<std::string> split_header(const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        return out;
    }

    std::vector<std::string> header_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::vector<double>> rows_;
};

}  // namespace csv
}  // namespace rdx
