#include "fedcaug/params_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "fedcaug/error.hpp"

namespace fedcaug::nn {

namespace {

constexpr char kMagic[4] = {'F', 'C', 'A', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u32(out, bits);
}

struct Reader {
    const std::string& bytes;
    const std::string& path;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > bytes.size()) {
            throw FormatError(path + ": truncated reading " + what, bytes.size());
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | static_cast<std::uint8_t>(bytes[pos + i]);
        }
        pos += 4;
        return v;
    }
    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_params(const ModelParams& params, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(params.tensors.size()));
    for (const auto& [name, t] : params.tensors) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.append(name);
        put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : t.data) put_f32(out, static_cast<float>(v));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ArgumentError("cannot write checkpoint: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw ArgumentError("short write: " + path);
}

std::map<std::string, Tensor> load_raw_tensors(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ArgumentError("cannot open checkpoint: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string bytes = ss.str();

    Reader r{bytes, path};
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(path + ": bad magic (expected FCAW)", 0);
    }
    r.pos = 4;
    const std::uint32_t version = r.u32("version");
    if (version != kVersion) {
        throw FormatError(path + ": unsupported version " + std::to_string(version), 4);
    }
    const std::uint32_t count = r.u32("tensor count");

    std::map<std::string, Tensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32("name length");
        const std::string name = r.str(name_len, "name");
        const std::uint32_t rank = r.u32("rank");
        std::vector<int> dims(rank);
        std::size_t total = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            dims[d] = static_cast<int>(r.u32("dim"));
            total *= static_cast<std::size_t>(dims[d]);
        }
        Tensor t(dims);
        for (std::size_t j = 0; j < total; ++j) t.data[j] = r.f32("payload");
        tensors.emplace(name, std::move(t));
    }
    return tensors;
}

ModelParams load_params(const std::string& path, const Architecture& arch) {
    ModelParams reference = init_params(arch, 0);
    std::map<std::string, Tensor> loaded = load_raw_tensors(path);

    ModelParams out;
    out.arch = arch;
    for (const auto& [name, t] : reference.tensors) {
        auto it = loaded.find(name);
        if (it == loaded.end()) {
            throw FormatError(path + ": missing tensor '" + name + "'", 0);
        }
        if (it->second.shape != t.shape) {
            throw ShapeError("checkpoint tensor '" + name + "'", shape_string(t.shape),
                             shape_string(it->second.shape));
        }
        out.tensors.emplace(name, std::move(it->second));
    }
    return out;
}

}  // namespace fedcaug::nn
