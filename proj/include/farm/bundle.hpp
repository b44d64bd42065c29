#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "farm/matrix_io.hpp"

namespace farm {

// Named collection of matrices and text entries persisted as one file:
// "FARMBDL1", u64 count, then per entry: u64 name length, name, u8 kind
// (0 matrix, 1 text), u64 payload length, payload. Matrix payloads are
// complete FARMAUG1 records.
struct Bundle {
    std::map<std::string, Matrix> matrices;
    std::map<std::string, std::string> texts;

    const Matrix& matrix(const std::string& name) const;
    const std::string& text(const std::string& name) const;
};

void save_bundle(const Bundle& b, const std::filesystem::path& path);
Bundle load_bundle(const std::filesystem::path& path);

}  // namespace farm
