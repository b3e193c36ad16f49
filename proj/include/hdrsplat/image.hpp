#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdrsplat {

enum class ColorSpace { LinearHdr, LdrUnit };

/// H x W x 3 image, row-major, channels interleaved. Pixel (x, y) channel c
/// lives at data[(y * width + x) * 3 + c], so the buffer doubles as a
/// (width*height) x 3 batch for per-pixel networks.
struct ImageBuffer {
    static constexpr int kChannels = 3;

    int width = 0;
    int height = 0;
    ColorSpace space = ColorSpace::LinearHdr;
    std::vector<double> data;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, ColorSpace cs = ColorSpace::LinearHdr, double fill = 0.0)
        : width(w), height(h), space(cs), data(static_cast<std::size_t>(w) * h * kChannels, fill) {
        if (w < 0 || h < 0) throw std::invalid_argument("ImageBuffer: negative dimensions");
    }

    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * kChannels + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * kChannels + c]; }

    bool same_shape(const ImageBuffer& o) const { return width == o.width && height == o.height; }
};

class ShapeMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeMismatch(std::string(what) + ": image shapes differ (" + std::to_string(a.width) + "x" +
                            std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                            std::to_string(b.height) + ")");
}

}  // namespace hdrsplat
