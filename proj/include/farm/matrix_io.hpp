#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "farm/linalg.hpp"

namespace farm {

// Dense design matrix with optional column names. Values are stored in an
// Eigen matrix; the serialized order is row-major.
struct Matrix {
    MatrixXd values;
    std::vector<std::string> col_names;

    Index rows() const { return values.rows(); }
    Index cols() const { return values.cols(); }
    bool operator==(const Matrix&) const = default;
};

// Throws DataError if any entry is non-finite or names are malformed.
void validate(const Matrix& m);

Matrix load_csv(const std::filesystem::path& path, bool has_header);
void save_csv(const Matrix& m, const std::filesystem::path& path);

// Binary container: "FARMAUG1", u64 n, u64 p, n*p little-endian f64
// row-major, then (optional) u64 p followed by p length-prefixed names.
void save_bin(const Matrix& m, const std::filesystem::path& path);
Matrix load_bin(const std::filesystem::path& path);

void write_matrix_record(std::ostream& out, const Matrix& m);
// Reads one record; consumes the stream to its end.
Matrix read_matrix_record(std::istream& in);

enum class ScaleMode { demean, zscore };

// Column centers and scales estimated once; apply() is the same affine map
// for any later rows.
struct Standardizer {
    RowVectorXd centers;
    RowVectorXd scales;

    MatrixXd apply(const MatrixXd& m) const;
};

struct Standardized {
    MatrixXd values;
    Standardizer map;
};

// Sample sd uses the n-1 divisor. Zero-variance columns keep scale 1.
Standardized standardize(const MatrixXd& m, ScaleMode mode);

// Indices of the m columns with the largest sums, ascending.
std::vector<Index> top_frequency_columns(const MatrixXd& counts, Index m);

struct PanelRecord {
    std::string asset_id;
    long date = 0;
    double y = 0.0;
    Index features = 0;  // row in PanelData::features
    std::optional<double> market_cap;
};

struct PanelData {
    std::vector<PanelRecord> records;
    Matrix features;
};

// Columns: asset_id,date,y[,market_cap],f1..fp (header required).
PanelData load_panel_csv(const std::filesystem::path& path);

// Splits one CSV line (RFC-4180 subset: quoted fields, "" escapes).
std::vector<std::string> split_csv_line(const std::string& line);

double parse_real(const std::string& cell, std::size_t row, std::size_t col);

}  // namespace farm
