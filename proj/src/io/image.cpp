#include "derainsplat/io/image.hpp"

#include "derainsplat/common/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

namespace drs::io {

namespace {

ReadObserver& observer() {
    static ReadObserver obs;
    return obs;
}

std::uint8_t to_byte(double v) {
    if (!(v > 0.0)) return 0;  // also maps NaN to 0
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

}  // namespace

void set_read_observer(ReadObserver obs) { observer() = std::move(obs); }

Tensor read_png(const std::string& path) {
    if (observer()) observer()(path);
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw ValidationError("read_png: cannot read '" + path + "': " + img.message);
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw ValidationError("read_png: cannot decode '" + path + "': " + msg);
    }
    const std::size_t h = img.height, w = img.width;
    std::vector<double> v(3 * h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) v[(c * h + y) * w + x] = buf[(y * w + x) * 3 + c] / 255.0;
    return Tensor({3, h, w}, std::move(v));
}

Tensor quantize8(const Tensor& image) {
    std::vector<double> v(image.numel());
    const auto src = image.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = to_byte(src[i]) / 255.0;
    return Tensor(image.shape(), std::move(v));
}

void write_png(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || (image.size(0) != 3 && image.size(0) != 1) || image.size(1) == 0 || image.size(2) == 0)
        throw DimensionError("write_png: expected [3,H,W] or [1,H,W], got " + ad::shape_str(image.shape()));
    const std::size_t ch = image.size(0), h = image.size(1), w = image.size(2);
    std::vector<std::uint8_t> buf(3 * h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                buf[(y * w + x) * 3 + c] = to_byte(image[((ch == 3 ? c : 0) * h + y) * w + x]);
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
        throw ValidationError("write_png: cannot write '" + path + "': " + img.message);
}

}  // namespace drs::io
