#include "tra/serialize.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace tra {

namespace {

constexpr char kMagic[5] = {'T', 'R', 'A', 'W', '1'};

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& path) : b_(bytes), path_(path) {}

    bool eof() const { return pos_ == b_.size(); }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
        pos_ += 8;
        return v;
    }

    float f32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
        pos_ += 4;
        return std::bit_cast<float>(v);
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) {
        require<DataError>(pos_ + n <= b_.size(), "truncated weight file ", path_, " at offset ",
                           pos_);
    }

    const std::string& b_;
    std::string path_;
    std::size_t pos_ = 0;
};

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require<DataError>(in.good(), "cannot open ", path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

} // namespace

void write_traw1(const std::string& path, const std::vector<WeightRecord>& records) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    for (const auto& r : records) {
        require<ShapeError>(static_cast<std::int64_t>(r.values.size()) == numel(r.shape),
                            "weight record '", r.name, "' has ", r.values.size(),
                            " values for shape ", shape_str(r.shape));
        put_u64(out, r.name.size());
        out.append(r.name);
        put_u64(out, r.shape.size());
        for (auto e : r.shape) put_u64(out, static_cast<std::uint64_t>(e));
        for (float v : r.values) put_f32(out, v);
    }

    // Write-to-temp then rename, so failures never leave a partial file.
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        require<DataError>(os.good(), "cannot write ", tmp.string());
        os.write(out.data(), static_cast<std::streamsize>(out.size()));
        require<DataError>(os.good(), "short write to ", tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    require<DataError>(!ec, "cannot rename ", tmp.string(), " to ", path, ": ", ec.message());
}

std::vector<WeightRecord> read_traw1(const std::string& path) {
    const std::string bytes = read_all(path);
    require<DataError>(bytes.size() >= sizeof(kMagic) &&
                           std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0,
                       path, " is not a TRAW1 weight file");
    Reader rd(bytes, path);
    rd.bytes(sizeof(kMagic));
    std::vector<WeightRecord> records;
    while (!rd.eof()) {
        WeightRecord r;
        const std::uint64_t name_len = rd.u64();
        require<DataError>(name_len <= 4096, "implausible name length ", name_len, " in ", path);
        r.name = rd.bytes(name_len);
        const std::uint64_t rank = rd.u64();
        require<DataError>(rank <= 8, "implausible rank ", rank, " in ", path);
        std::int64_t count = 1;
        for (std::uint64_t i = 0; i < rank; ++i) {
            const auto e = static_cast<std::int64_t>(rd.u64());
            require<DataError>(e >= 0, "negative extent in ", path);
            r.shape.push_back(e);
            count *= e;
        }
        r.values.reserve(static_cast<std::size_t>(count));
        for (std::int64_t i = 0; i < count; ++i) r.values.push_back(rd.f32());
        records.push_back(std::move(r));
    }
    return records;
}

std::string file_content_hash(const std::string& path) {
    const std::string bytes = read_all(path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : bytes) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace tra
