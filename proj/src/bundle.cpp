#include "farm/bundle.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "farm/error.hpp"

namespace farm {

namespace {

constexpr char kBundleMagic[8] = {'F', 'A', 'R', 'M', 'B', 'D', 'L', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw DataError("truncated bundle");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes[i]} << (8 * i);
    return v;
}

std::string get_string(std::istream& in, std::uint64_t len) {
    if (len > (std::uint64_t{1} << 36)) throw DataError("implausible bundle entry size");
    std::string s(len, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(len))) throw DataError("truncated bundle");
    return s;
}

void put_entry(std::ostream& out, const std::string& name, unsigned char kind, const std::string& payload) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(kind));
    put_u64(out, payload.size());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

}  // namespace

const Matrix& Bundle::matrix(const std::string& name) const {
    auto it = matrices.find(name);
    if (it == matrices.end()) throw DataError("bundle has no matrix '" + name + "'");
    return it->second;
}

const std::string& Bundle::text(const std::string& name) const {
    auto it = texts.find(name);
    if (it == texts.end()) throw DataError("bundle has no text entry '" + name + "'");
    return it->second;
}

void save_bundle(const Bundle& b, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(kBundleMagic, sizeof kBundleMagic);
    put_u64(out, b.matrices.size() + b.texts.size());
    for (const auto& [name, m] : b.matrices) {
        std::ostringstream rec(std::ios::binary);
        write_matrix_record(rec, m);
        put_entry(out, name, 0, rec.str());
    }
    for (const auto& [name, t] : b.texts) put_entry(out, name, 1, t);
    if (!out) throw DataError("write failed for " + path.string());
}

Bundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    char magic[8];
    if (!in.read(magic, 8)) throw DataError("truncated bundle");
    if (std::memcmp(magic, kBundleMagic, 8) != 0) throw DataError("bad magic");
    Bundle b;
    const std::uint64_t count = get_u64(in);
    for (std::uint64_t e = 0; e < count; ++e) {
        std::string name = get_string(in, get_u64(in));
        const int kind = in.get();
        if (kind == EOF) throw DataError("truncated bundle");
        std::string payload = get_string(in, get_u64(in));
        if (kind == 0) {
            std::istringstream rec(payload, std::ios::binary);
            b.matrices.emplace(std::move(name), read_matrix_record(rec));
        } else if (kind == 1) {
            b.texts.emplace(std::move(name), std::move(payload));
        } else {
            throw DataError("unknown bundle entry kind");
        }
    }
    return b;
}

}  // namespace farm
