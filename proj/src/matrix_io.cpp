#include "farm/matrix_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "farm/error.hpp"

namespace farm {

namespace {

constexpr char kMagic[8] = {'F', 'A', 'R', 'M', 'A', 'U', 'G', '1'};

std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
        return r;
    }
    return v;
}

void put_u64(std::ostream& out, std::uint64_t v) {
    const std::uint64_t le = to_le(v);
    out.write(reinterpret_cast<const char*>(&le), sizeof le);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

bool get_u64(std::istream& in, std::uint64_t& v) {
    std::uint64_t le = 0;
    if (!in.read(reinterpret_cast<char*>(&le), sizeof le)) return false;
    v = to_le(le);
    return true;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void validate(const Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (!std::isfinite(m.values(i, j))) {
                throw DataError(fmt::format("non-finite value at row {} col {}", i + 1, j + 1));
            }
        }
    }
    if (!m.col_names.empty()) {
        if (static_cast<Index>(m.col_names.size()) != m.cols()) {
            throw DataError(fmt::format("{} column names for {} columns", m.col_names.size(), m.cols()));
        }
        std::set<std::string> seen;
        for (const auto& name : m.col_names) {
            if (!seen.insert(name).second) throw DataError("duplicate column name '" + name + "'");
        }
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

double parse_real(const std::string& raw, std::size_t row, std::size_t col) {
    const std::string cell = trim(raw);
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (cell.empty() || ec != std::errc() || ptr != last) {
        throw DataError(fmt::format("cannot parse '{}' as a number at row {} col {}", cell, row, col));
    }
    if (!std::isfinite(v)) {
        throw DataError(fmt::format("non-finite value at row {} col {}", row, col));
    }
    return v;
}

Matrix load_csv(const std::filesystem::path& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    Matrix m;
    std::vector<double> flat;
    std::size_t width = 0;
    std::size_t row = 0;
    std::string line;
    bool header_pending = has_header;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (header_pending) {
            for (auto& c : cells) m.col_names.push_back(trim(c));
            width = cells.size();
            header_pending = false;
            continue;
        }
        ++row;
        if (width == 0) width = cells.size();
        if (cells.size() != width) {
            throw DataError(fmt::format("ragged row {}: {} fields, expected {}", row, cells.size(), width));
        }
        for (std::size_t j = 0; j < cells.size(); ++j) flat.push_back(parse_real(cells[j], row, j + 1));
    }
    if (row == 0) throw DataError("no rows in " + path.string());
    m.values.resize(static_cast<Index>(row), static_cast<Index>(width));
    for (std::size_t i = 0; i < row; ++i) {
        for (std::size_t j = 0; j < width; ++j) m.values(i, j) = flat[i * width + j];
    }
    validate(m);
    return m;
}

void save_csv(const Matrix& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    if (!m.col_names.empty()) {
        for (std::size_t j = 0; j < m.col_names.size(); ++j) out << (j ? "," : "") << m.col_names[j];
        out << '\n';
    }
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << fmt::format("{:.17g}", m.values(i, j));
        out << '\n';
    }
}

void write_matrix_record(std::ostream& out, const Matrix& m) {
    out.write(kMagic, sizeof kMagic);
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) put_f64(out, m.values(i, j));
    }
    if (!m.col_names.empty()) {
        put_u64(out, m.col_names.size());
        for (const auto& name : m.col_names) {
            put_u64(out, name.size());
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
        }
    }
}

Matrix read_matrix_record(std::istream& in) {
    char magic[8];
    if (!in.read(magic, sizeof magic)) throw DataError("truncated: missing header");
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw DataError("bad magic");
    std::uint64_t n = 0, p = 0;
    if (!get_u64(in, n) || !get_u64(in, p)) throw DataError("truncated: missing dimensions");
    if (p != 0 && n > (std::uint64_t{1} << 40) / p) throw DataError("implausible dimensions");
    Matrix m;
    m.values.resize(static_cast<Index>(n), static_cast<Index>(p));
    for (std::uint64_t i = 0; i < n; ++i) {
        for (std::uint64_t j = 0; j < p; ++j) {
            std::uint64_t bits = 0;
            if (!get_u64(in, bits)) throw DataError("truncated payload");
            m.values(static_cast<Index>(i), static_cast<Index>(j)) = std::bit_cast<double>(bits);
        }
    }
    // Name table: present iff the stream continues with a count equal to p.
    std::uint64_t count = 0;
    if (get_u64(in, count)) {
        if (count != p) throw DataError("name table size does not match column count");
        for (std::uint64_t j = 0; j < count; ++j) {
            std::uint64_t len = 0;
            if (!get_u64(in, len) || len > (1u << 20)) throw DataError("truncated name table");
            std::string name(len, '\0');
            if (!in.read(name.data(), static_cast<std::streamsize>(len))) throw DataError("truncated name table");
            m.col_names.push_back(std::move(name));
        }
    } else if (in.gcount() != 0) {
        throw DataError("truncated name table");
    }
    return m;
}

void save_bin(const Matrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_matrix_record(out, m);
    if (!out) throw DataError("write failed for " + path.string());
}

Matrix load_bin(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return read_matrix_record(in);
}

MatrixXd Standardizer::apply(const MatrixXd& m) const {
    if (m.cols() != centers.size()) {
        throw UsageError(fmt::format("standardizer fitted on {} columns, got {}", centers.size(), m.cols()));
    }
    return (m.rowwise() - centers).array().rowwise() / scales.array();
}

Standardized standardize(const MatrixXd& m, ScaleMode mode) {
    const Index n = m.rows();
    if (mode == ScaleMode::zscore && n < 2) throw UsageError("zscore standardization needs at least 2 rows");
    Standardized out;
    out.map.centers = column_means(m);
    // second pass removes the rounding left by the first mean
    MatrixXd centered = m.rowwise() - out.map.centers;
    const RowVectorXd correction = column_means(centered);
    out.map.centers += correction;
    centered = m.rowwise() - out.map.centers;
    out.map.scales = RowVectorXd::Ones(m.cols());
    if (mode == ScaleMode::zscore) {
        for (Index j = 0; j < m.cols(); ++j) {
            const double sd = std::sqrt(centered.col(j).squaredNorm() / static_cast<double>(n - 1));
            if (sd > 0.0) out.map.scales(j) = sd;
        }
    }
    out.values = centered.array().rowwise() / out.map.scales.array();
    return out;
}

std::vector<Index> top_frequency_columns(const MatrixXd& counts, Index m) {
    const Index p = counts.cols();
    if (m > p || m < 0) throw UsageError(fmt::format("cannot keep {} of {} columns", m, p));
    const RowVectorXd sums = counts.colwise().sum();
    std::vector<Index> order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return sums(a) > sums(b); });
    order.resize(static_cast<std::size_t>(m));
    std::sort(order.begin(), order.end());
    return order;
}

PanelData load_panel_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("no rows in " + path.string());
    const auto header = split_csv_line(line);
    if (header.size() < 3 || trim(header[0]) != "asset_id" || trim(header[1]) != "date" || trim(header[2]) != "y") {
        throw DataError("panel header must start with asset_id,date,y");
    }
    const bool has_cap = header.size() > 3 && trim(header[3]) == "market_cap";
    const std::size_t first_feature = has_cap ? 4 : 3;
    PanelData panel;
    for (std::size_t j = first_feature; j < header.size(); ++j) panel.features.col_names.push_back(trim(header[j]));
    const std::size_t p = header.size() - first_feature;
    std::vector<double> flat;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw DataError(fmt::format("ragged row {}: {} fields, expected {}", row, cells.size(), header.size()));
        }
        PanelRecord rec;
        rec.asset_id = trim(cells[0]);
        rec.date = static_cast<long>(parse_real(cells[1], row, 2));
        rec.y = parse_real(cells[2], row, 3);
        if (has_cap && !trim(cells[3]).empty()) {
            const double cap = parse_real(cells[3], row, 4);
            if (cap < 0.0) throw DataError(fmt::format("negative market_cap at row {}", row));
            rec.market_cap = cap;
        }
        rec.features = static_cast<Index>(row - 1);
        for (std::size_t j = first_feature; j < cells.size(); ++j) flat.push_back(parse_real(cells[j], row, j + 1));
        panel.records.push_back(std::move(rec));
    }
    if (row == 0) throw DataError("no rows in " + path.string());
    panel.features.values.resize(static_cast<Index>(row), static_cast<Index>(p));
    for (std::size_t i = 0; i < row; ++i) {
        for (std::size_t j = 0; j < p; ++j) panel.features.values(i, j) = flat[i * p + j];
    }
    validate(panel.features);
    return panel;
}

}  // namespace farm
