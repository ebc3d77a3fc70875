#include "photoseq/tensor_image.hpp"

#include "photoseq/errors.hpp"

namespace photoseq {

nn::Tensor to_tensor(std::span<const Image* const> images) {
  if (images.empty()) throw ArgumentError("to_tensor: no images");
  const Image& first = *images.front();
  nn::Tensor t(Image::kChannels, static_cast<int>(images.size()), first.height(), first.width());
  for (std::size_t n = 0; n < images.size(); ++n) {
    require_same_shape(*images[n], first, "to_tensor");
    store_image(t, static_cast<int>(n), *images[n]);
  }
  return t;
}

nn::Tensor to_tensor(const Image& image) {
  const Image* p = &image;
  return to_tensor(std::span<const Image* const>(&p, 1));
}

Image image_from_tensor(const nn::Tensor& t, int n) {
  if (t.channels() != Image::kChannels || n < 0 || n >= t.batch()) {
    throw ShapeError("image_from_tensor: tensor is not a 3-channel batch containing sample " +
                     std::to_string(n));
  }
  Image img(t.height(), t.width());
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < t.height(); ++y)
      for (int x = 0; x < t.width(); ++x) img.at(y, x, c) = t.at(c, n, y, x);
  return img;
}

void store_image(nn::Tensor& t, int n, const Image& img) {
  if (t.channels() != Image::kChannels || t.height() != img.height() || t.width() != img.width()) {
    throw ShapeError("store_image: tensor/image shape mismatch");
  }
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) t.at(c, n, y, x) = static_cast<float>(img.at(y, x, c));
}

}  // namespace photoseq
