#include "madf/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "madf/common.hpp"

namespace madf {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) throw IoError(path + ": truncated header");
    return tok;
}

int parse_dim(const std::string& tok, const std::string& path) {
    try {
        const int v = std::stoi(tok);
        if (v <= 0 || v > 1 << 16) throw IoError(path + ": bad dimension " + tok);
        return v;
    } catch (const IoError&) {
        throw;
    } catch (...) {
        throw IoError(path + ": malformed header token '" + tok + "'");
    }
}

struct PnmHeader {
    std::string magic;
    int w = 0, h = 0, maxval = 0;
};

PnmHeader read_header(std::istream& in, const std::string& path, const char* want_magic) {
    PnmHeader hd;
    hd.magic = next_token(in, path);
    if (hd.magic != want_magic)
        throw IoError(path + ": expected " + want_magic + " header, got '" + hd.magic + "'");
    hd.w = parse_dim(next_token(in, path), path);
    hd.h = parse_dim(next_token(in, path), path);
    hd.maxval = parse_dim(next_token(in, path), path);
    if (hd.maxval != 255) throw IoError(path + ": only maxval 255 supported");
    return hd;
}

std::uint8_t quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

ImageSample load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open for reading");
    const PnmHeader hd = read_header(in, path, "P6");
    ImageSample img(3, hd.h, hd.w);
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(hd.h) * hd.w * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw IoError(path + ": truncated pixel payload");
    for (int y = 0; y < hd.h; ++y)
        for (int x = 0; x < hd.w; ++x)
            for (int ci = 0; ci < 3; ++ci)
                img.at(ci, y, x) =
                    raw[(static_cast<std::size_t>(y) * hd.w + x) * 3 + ci] / 255.0;
    img.provenance = "file(" + path + ")";
    return img;
}

void save_image(const ImageSample& img, const std::string& path) {
    if (img.c != 3) throw IoError(path + ": P6 requires 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(img.h) * img.w * 3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ci = 0; ci < 3; ++ci)
                raw[(static_cast<std::size_t>(y) * img.w + x) * 3 + ci] =
                    quantize(img.at(ci, y, x));
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError(path + ": write failed");
}

Mask load_mask(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open for reading");
    const PnmHeader hd = read_header(in, path, "P5");
    Mask mask(hd.h, hd.w);
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(hd.h) * hd.w);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw IoError(path + ": truncated pixel payload");
    for (std::size_t i = 0; i < raw.size(); ++i) mask.m[i] = raw[i] >= 128 ? 1 : 0;
    return mask;
}

void save_mask(const Mask& mask, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << "P5\n" << mask.w << " " << mask.h << "\n255\n";
    std::vector<std::uint8_t> raw(mask.m.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = mask.m[i] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError(path + ": write failed");
}

ImageSample quantized8(const ImageSample& img) {
    ImageSample out = img;
    for (auto& v : out.px) v = quantize(v) / 255.0;
    return out;
}

ImageSample clamp01(const ImageSample& img) {
    ImageSample out = img;
    for (auto& v : out.px) v = std::clamp(v, 0.0, 1.0);
    return out;
}

}  // namespace madf
