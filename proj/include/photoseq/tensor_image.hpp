#pragma once

#include <span>

#include "photoseq/image.hpp"
#include "photoseq/nn/tensor.hpp"

namespace photoseq {

/// Packs same-sized images into a 3 x N x H x W tensor.
nn::Tensor to_tensor(std::span<const Image* const> images);
nn::Tensor to_tensor(const Image& image);

/// Extracts sample `n` of a 3-channel tensor.
Image image_from_tensor(const nn::Tensor& t, int n);

/// Writes an image into sample `n` of a 3-channel tensor of matching size.
void store_image(nn::Tensor& t, int n, const Image& img);

}  // namespace photoseq
