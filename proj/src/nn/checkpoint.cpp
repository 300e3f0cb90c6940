#include "auvtrack/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace auvtrack::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) {
        throw std::runtime_error("checkpoint truncated");
    }
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors) {
    os.write(kCheckpointMagic, 4);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
        os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        const Matrix& v = t.tensor.value();
        put<std::uint64_t>(os, static_cast<std::uint64_t>(v.rows()));
        put<std::uint64_t>(os, static_cast<std::uint64_t>(v.cols()));
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    write_checkpoint(os, tensors);
}

void read_checkpoint(std::istream& is, const std::vector<NamedTensor>& tensors) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw std::runtime_error("not a checkpoint file (bad magic)");
    }
    const auto version = get<std::uint32_t>(is);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = get<std::uint32_t>(is);
    if (count != tensors.size()) {
        throw std::runtime_error("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                                 std::to_string(tensors.size()));
    }
    for (const auto& t : tensors) {
        const auto len = get<std::uint32_t>(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (name != t.name) {
            throw std::runtime_error("checkpoint tensor '" + name + "' where '" + t.name + "' was expected");
        }
        const auto rows = get<std::uint64_t>(is);
        const auto cols = get<std::uint64_t>(is);
        Matrix& v = t.tensor.node()->value;
        if (static_cast<Eigen::Index>(rows) != v.rows() || static_cast<Eigen::Index>(cols) != v.cols()) {
            throw std::runtime_error("shape mismatch for '" + name + "'");
        }
        is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
        if (!is) {
            throw std::runtime_error("checkpoint truncated in '" + name + "'");
        }
    }
}

void load_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open " + path.string());
    }
    read_checkpoint(is, tensors);
}

std::string checkpoint_bytes(const std::vector<NamedTensor>& tensors) {
    std::ostringstream os(std::ios::binary);
    write_checkpoint(os, tensors);
    return os.str();
}

}  // namespace auvtrack::nn
