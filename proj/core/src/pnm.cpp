#include "fedcaug/pnm.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "fedcaug/error.hpp"

namespace fedcaug::img {

namespace {

struct PnmHeader {
    int magic = 0;  // 5 or 6
    int width = 0;
    int height = 0;
    int maxval = 0;
    std::size_t payload_offset = 0;
};

// Reads the ASCII header of a P5/P6 file. Accepts '#' comments.
PnmHeader parse_header(const std::string& bytes, const std::string& path) {
    std::size_t pos = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw FormatError(path + ": " + msg, pos);
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        fail("not a binary PGM/PPM (expected magic P5 or P6)");
    }
    PnmHeader h;
    h.magic = bytes[1] - '0';
    pos = 2;

    auto next_int = [&]() -> int {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            fail("expected integer in header");
        }
        long v = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
        }
        return static_cast<int>(v);
    };

    h.width = next_int();
    h.height = next_int();
    h.maxval = next_int();
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        fail("expected single whitespace after maxval");
    }
    ++pos;
    h.payload_offset = pos;
    if (h.width <= 0 || h.height <= 0) fail("non-positive dimensions");
    if (h.maxval != 255) fail("expected maxval 255, got " + std::to_string(h.maxval));
    return h;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArgumentError("cannot write file: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ArgumentError("short write: " + path);
}

inline unsigned char quantize(double v) {
    return static_cast<unsigned char>(std::lround(clamp01(v) * 255.0));
}

}  // namespace

void save_pnm(const Image& image, const std::string& path) {
    const int magic = image.channels == 3 ? 6 : 5;
    std::string bytes = "P" + std::to_string(magic) + "\n" + std::to_string(image.width) + " " +
                        std::to_string(image.height) + "\n255\n";
    bytes.reserve(bytes.size() + image.pixels.size());
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c)
                bytes.push_back(static_cast<char>(quantize(image.at(y, x, c))));
    write_file(path, bytes);
}

Image load_pnm(const std::string& path) {
    const std::string bytes = read_file(path);
    const PnmHeader h = parse_header(bytes, path);
    const int channels = h.magic == 6 ? 3 : 1;
    const std::size_t need = static_cast<std::size_t>(h.width) * h.height * channels;
    if (bytes.size() - h.payload_offset < need) {
        throw FormatError(path + ": truncated payload", bytes.size());
    }
    Image image(h.height, h.width, channels);
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_offset;
    for (std::size_t i = 0; i < need; ++i) image.pixels[i] = p[i] / 255.0;
    return image;
}

void save_mask_pgm(const BinaryMap& mask, const std::string& path) {
    std::string bytes = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) +
                        "\n255\n";
    bytes.reserve(bytes.size() + mask.values.size());
    for (std::uint8_t v : mask.values) bytes.push_back(static_cast<char>(v ? 255 : 0));
    write_file(path, bytes);
}

BinaryMap load_mask_pgm(const std::string& path) {
    const std::string bytes = read_file(path);
    const PnmHeader h = parse_header(bytes, path);
    if (h.magic != 5) throw FormatError(path + ": expected P5 mask", 0);
    const std::size_t need = static_cast<std::size_t>(h.width) * h.height;
    if (bytes.size() - h.payload_offset < need) {
        throw FormatError(path + ": truncated payload", bytes.size());
    }
    BinaryMap mask(h.height, h.width);
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_offset;
    for (std::size_t i = 0; i < need; ++i) mask.values[i] = p[i] >= 128 ? 1 : 0;
    return mask;
}

}  // namespace fedcaug::img
