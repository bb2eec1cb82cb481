#include "bosonlab/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

namespace bl::io {

namespace {

template <class T>
void put_le(std::string& out, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw ValidationError("field snapshot: truncated data");
    unsigned char b[sizeof(T)];
    std::memcpy(b, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

}  // namespace

std::string csv_escape(const std::string& cell) {
    if (cell.find_first_of(",\"\r\n") == std::string::npos) return cell;
    std::string q = "\"";
    for (char c : cell) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + '"';
}

std::string fmt(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : cols_(header.size()) {
    if (header.empty()) throw ValidationError("csv: empty header");
    row(header);
}

CsvWriter& CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != cols_) throw ValidationError("csv: row width does not match the header");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ += ',';
        out_ += csv_escape(cells[i]);
    }
    out_ += "\r\n";
    return *this;
}

CsvWriter& CsvWriter::row(const std::vector<double>& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(fmt(v));
    return row(cells);
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> cur;
    std::string cell;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') cell += '"', ++i;
                else quoted = false;
            } else cell += c;
            continue;
        }
        if (c == '"') quoted = true, any = true;
        else if (c == ',') cur.push_back(std::move(cell)), cell.clear(), any = true;
        else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            cur.push_back(std::move(cell));
            cell.clear();
            rows.push_back(std::move(cur));
            cur.clear();
            any = false;
        } else cell += c, any = true;
    }
    if (quoted) throw ValidationError("csv: unterminated quoted field");
    if (any || !cell.empty()) {
        cur.push_back(std::move(cell));
        rows.push_back(std::move(cur));
    }
    return rows;
}

std::string encode_field(const Field& f, double t) {
    std::string out(kFieldMagic, 4);
    put_le<std::uint32_t>(out, kFieldVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.grid.d));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.rank));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.grid.n));
    put_le<double>(out, f.grid.L);
    put_le<double>(out, t);
    out.reserve(out.size() + 16 * f.size());
    for (const cplx& z : f.data) {
        put_le<double>(out, z.real());
        put_le<double>(out, z.imag());
    }
    return out;
}

Field decode_field(const std::string& bytes, double* t) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kFieldMagic, 4) != 0)
        throw ValidationError("field snapshot: bad magic");
    std::size_t pos = 4;
    if (get_le<std::uint32_t>(bytes, pos) != kFieldVersion) throw ValidationError("field snapshot: unknown version");
    const int d = static_cast<int>(get_le<std::uint32_t>(bytes, pos));
    const int rank = static_cast<int>(get_le<std::uint32_t>(bytes, pos));
    const int n = static_cast<int>(get_le<std::uint32_t>(bytes, pos));
    const double L = get_le<double>(bytes, pos);
    const double tt = get_le<double>(bytes, pos);
    if (t) *t = tt;
    Field f(GridSpec(d, n, L), rank);
    if (bytes.size() != pos + 16 * f.size()) throw ValidationError("field snapshot: size does not match the header");
    for (auto& z : f.data) {
        const double re = get_le<double>(bytes, pos);
        z = cplx(re, get_le<double>(bytes, pos));
    }
    return f;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: digest failed");
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (unsigned int i = 0; i < len; ++i) {
        s += hex[md[i] >> 4];
        s += hex[md[i] & 15];
    }
    return s;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + p.string());
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace bl::io
