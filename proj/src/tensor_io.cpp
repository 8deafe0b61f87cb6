#include "stcorr/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace stcorr {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'T', '1'};

void put_u64le(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f32le(std::string& buf, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) buf.push_back(char((bits >> (8 * i)) & 0xff));
}

std::uint64_t get_u64le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
}

float get_f32le(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    return std::bit_cast<float>(v);
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
    std::string buf;
    buf.reserve(5 + 8 * t.rank() + 4 * t.size());
    buf.append(kMagic, 4);
    buf.push_back(char(t.rank()));
    for (std::size_t d : t.dims()) put_u64le(buf, d);
    for (float v : t.values()) put_f32le(buf, v);
    os.write(buf.data(), std::streamsize(buf.size()));
    if (!os) throw std::runtime_error("tensor write failed");
}

Tensor read_tensor(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("tensor read: bad magic");

    char rank_byte = 0;
    if (!is.read(&rank_byte, 1))
        throw std::runtime_error("tensor read: truncated header");
    const unsigned rank = static_cast<unsigned char>(rank_byte);
    if (rank < 1 || rank > 5)
        throw std::runtime_error("tensor read: unsupported rank " +
                                 std::to_string(rank));

    std::vector<std::size_t> dims(rank);
    std::uint64_t count = 1;
    for (unsigned i = 0; i < rank; ++i) {
        unsigned char raw[8];
        if (!is.read(reinterpret_cast<char*>(raw), 8))
            throw std::runtime_error("tensor read: truncated header");
        const std::uint64_t d = get_u64le(raw);
        if (d == 0 || d > (std::uint64_t(1) << 40) / count)
            throw std::runtime_error("tensor read: invalid dims");
        dims[i] = std::size_t(d);
        count *= d;
    }

    std::string payload(std::size_t(count) * 4, '\0');
    if (!is.read(payload.data(), std::streamsize(payload.size())))
        throw std::runtime_error("tensor read: payload length mismatch");
    if (is.peek() != std::char_traits<char>::eof())
        throw std::runtime_error("tensor read: payload length mismatch");

    std::vector<float> data(std::size_t(count), 0.0f);
    const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = get_f32le(p + 4 * i);
    return Tensor(std::move(dims), std::move(data));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    write_tensor(os, t);
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for read: " + path.string());
    return read_tensor(is);
}

}  // namespace stcorr
