#include "monoforward/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mono {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'M', 'F', 'C', 'K'};
constexpr std::uint32_t kMaxRank = 8;

template <class U>
void put(std::ostream& os, U v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

class Reader {
public:
    explicit Reader(std::ifstream& in, std::uint64_t size) : in_(in), size_(size) {}

    template <class U>
    U get(const char* what) {
        U v{};
        read(reinterpret_cast<char*>(&v), sizeof(U), what);
        return v;
    }
    void read(char* dst, std::uint64_t n, const char* what) {
        if (n > size_ - pos_)
            throw CheckpointError(std::string("checkpoint truncated while reading ") + what + " at offset " +
                                  std::to_string(pos_));
        in_.read(dst, static_cast<std::streamsize>(n));
        if (!in_) throw CheckpointError(std::string("read failure on ") + what);
        pos_ += n;
    }
    std::uint64_t remaining() const { return size_ - pos_; }

private:
    std::ifstream& in_;
    std::uint64_t size_;
    std::uint64_t pos_ = 0;
};

}  // namespace

std::size_t element_size(ElementTag tag) {
    switch (tag) {
        case ElementTag::F32: return 4;
        case ElementTag::F64: return 8;
        case ElementTag::U32: return 4;
        case ElementTag::U8: return 1;
    }
    throw CheckpointError("unknown element tag " + std::to_string(static_cast<int>(tag)));
}

std::uint64_t TensorRecord::count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

template <class T>
TensorRecord TensorRecord::from_matrix(std::string name, const DenseMatrix<T>& m) {
    TensorRecord r;
    r.name = std::move(name);
    r.dims = {m.rows(), m.cols()};
    r.tag = precision_of<T>() == Precision::Single ? ElementTag::F32 : ElementTag::F64;
    r.payload.resize(m.payload_bytes());
    if (!m.empty()) std::memcpy(r.payload.data(), m.data(), m.payload_bytes());
    return r;
}

TensorRecord TensorRecord::from_u32(std::string name, const std::vector<std::uint32_t>& v) {
    TensorRecord r;
    r.name = std::move(name);
    r.dims = {v.size()};
    r.tag = ElementTag::U32;
    r.payload.resize(v.size() * 4);
    if (!v.empty()) std::memcpy(r.payload.data(), v.data(), r.payload.size());
    return r;
}

TensorRecord TensorRecord::from_text(std::string name, const std::string& text) {
    TensorRecord r;
    r.name = std::move(name);
    r.dims = {text.size()};
    r.tag = ElementTag::U8;
    r.payload.assign(text.begin(), text.end());
    return r;
}

template <class T>
DenseMatrix<T> TensorRecord::to_matrix() const {
    if (dims.empty() || dims.size() > 2) throw CheckpointError("tensor " + name + " is not a matrix");
    const std::size_t rows = dims.size() == 2 ? dims[0] : 1;
    const std::size_t cols = dims.back();
    DenseMatrix<T> m(rows, cols);
    if (tag == ElementTag::F32) {
        const float* src = reinterpret_cast<const float*>(payload.data());
        for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(src[i]);
    } else if (tag == ElementTag::F64) {
        const double* src = reinterpret_cast<const double*>(payload.data());
        for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(src[i]);
    } else {
        throw CheckpointError("tensor " + name + " is not floating point");
    }
    return m;
}

std::vector<std::uint32_t> TensorRecord::to_u32() const {
    if (tag != ElementTag::U32) throw CheckpointError("tensor " + name + " is not u32");
    std::vector<std::uint32_t> v(count());
    if (!v.empty()) std::memcpy(v.data(), payload.data(), v.size() * 4);
    return v;
}

std::string TensorRecord::to_text() const {
    if (tag != ElementTag::U8) throw CheckpointError("tensor " + name + " is not text");
    return {payload.begin(), payload.end()};
}

void write_container(const std::filesystem::path& path, const std::vector<TensorRecord>& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
    os.write(kMagic, 4);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint64_t>(os, tensors.size());
    for (const auto& t : tensors) {
        if (t.payload.size() != t.count() * element_size(t.tag))
            throw CheckpointError("tensor " + t.name + " payload does not match its dims");
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
        os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) put<std::uint64_t>(os, d);
        put<std::uint8_t>(os, static_cast<std::uint8_t>(t.tag));
        os.write(reinterpret_cast<const char*>(t.payload.data()), static_cast<std::streamsize>(t.payload.size()));
    }
    if (!os) throw CheckpointError("write failure on " + path.string());
}

std::vector<TensorRecord> read_container(const std::filesystem::path& path) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec) throw CheckpointError("cannot stat " + path.string() + ": " + ec.message());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    Reader rd(in, size);
    char magic[4];
    rd.read(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError(path.string() + " is not a checkpoint file");
    const auto version = rd.get<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const auto n = rd.get<std::uint64_t>("tensor count");
    std::vector<TensorRecord> out;
    for (std::uint64_t i = 0; i < n; ++i) {
        TensorRecord t;
        const auto name_len = rd.get<std::uint32_t>("name length");
        if (name_len > rd.remaining()) throw CheckpointError("checkpoint truncated in tensor name");
        t.name.resize(name_len);
        rd.read(t.name.data(), name_len, "name");
        const auto rank = rd.get<std::uint32_t>("rank");
        if (rank > kMaxRank) throw CheckpointError("tensor " + t.name + " has implausible rank");
        t.dims.resize(rank);
        for (auto& d : t.dims) d = rd.get<std::uint64_t>("dims");
        const auto tag = rd.get<std::uint8_t>("element tag");
        if (tag > static_cast<std::uint8_t>(ElementTag::U8))
            throw CheckpointError("tensor " + t.name + " has unknown element tag");
        t.tag = static_cast<ElementTag>(tag);
        const std::uint64_t bytes = t.count() * element_size(t.tag);
        if (bytes > rd.remaining()) throw CheckpointError("checkpoint truncated in payload of " + t.name);
        t.payload.resize(bytes);
        rd.read(reinterpret_cast<char*>(t.payload.data()), bytes, "payload");
        out.push_back(std::move(t));
    }
    if (rd.remaining() != 0) throw CheckpointError("trailing bytes after last tensor in " + path.string());
    return out;
}

const TensorRecord* find_tensor_opt(const std::vector<TensorRecord>& tensors, const std::string& name) {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

const TensorRecord& find_tensor(const std::vector<TensorRecord>& tensors, const std::string& name) {
    if (const auto* t = find_tensor_opt(tensors, name)) return *t;
    throw CheckpointError("checkpoint has no tensor named " + name);
}

template TensorRecord TensorRecord::from_matrix(std::string, const DenseMatrix<float>&);
template TensorRecord TensorRecord::from_matrix(std::string, const DenseMatrix<double>&);
template DenseMatrix<float> TensorRecord::to_matrix() const;
template DenseMatrix<double> TensorRecord::to_matrix() const;

}  // namespace mono
