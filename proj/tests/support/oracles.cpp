#include "oracles.hpp"

#include <algorithm>
#include <cmath>

#include "prunekit/ops.hpp"

namespace prunekit::testing {

Tensor naive_conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
                    std::size_t stride, std::size_t padding) {
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  const std::size_t oh = (h + 2 * padding - k) / stride + 1;
  const std::size_t ow = (w + 2 * padding - k) / stride + 1;
  Tensor out({batch, cout, oh, ow});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = bias ? (*bias)[co] : 0.0;
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long iy = static_cast<long>(y * stride + i) - static_cast<long>(padding);
                const long ix = static_cast<long>(x * stride + j) - static_cast<long>(padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                  continue;
                acc += static_cast<double>(weight.at(co, ci, i, j)) *
                       input.at(n, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
          out.at(n, co, y, x) = static_cast<float>(acc);
        }
  return out;
}

Tensor naive_depthwise_conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
                              std::size_t stride, std::size_t padding) {
  const std::size_t batch = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t k = weight.dim(2);
  const std::size_t oh = (h + 2 * padding - k) / stride + 1;
  const std::size_t ow = (w + 2 * padding - k) / stride + 1;
  Tensor out({batch, c, oh, ow});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      Tensor plane({1, 1, h, w});
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) plane.at(0, 0, y, x) = input.at(n, ch, y, x);
      Tensor filt({1, 1, k, k});
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) filt.at(0, 0, i, j) = weight.at(ch, 0, i, j);
      Tensor b1;
      if (bias) b1 = Tensor({1}, std::vector<float>{(*bias)[ch]});
      const Tensor r = naive_conv2d(plane, filt, bias ? &b1 : nullptr, stride, padding);
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) out.at(n, ch, y, x) = r.at(0, 0, y, x);
    }
  return out;
}

Tensor naive_dense(const Tensor& input, const Tensor& weight, const Tensor* bias) {
  const std::size_t batch = input.dim(0), fin = input.dim(1), fout = weight.dim(0);
  Tensor out({batch, fout});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < fout; ++o) {
      double acc = bias ? (*bias)[o] : 0.0;
      for (std::size_t i = 0; i < fin; ++i)
        acc += static_cast<double>(input[n * fin + i]) * weight[o * fin + i];
      out[n * fout + o] = static_cast<float>(acc);
    }
  return out;
}

Tensor naive_maxpool2x2(const Tensor& input) {
  const std::size_t batch = input.dim(0), c = input.dim(1);
  const std::size_t oh = input.dim(2) / 2, ow = input.dim(3) / 2;
  Tensor out({batch, c, oh, ow});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          float m = input.at(n, ch, 2 * y, 2 * x);
          m = std::max(m, input.at(n, ch, 2 * y, 2 * x + 1));
          m = std::max(m, input.at(n, ch, 2 * y + 1, 2 * x));
          m = std::max(m, input.at(n, ch, 2 * y + 1, 2 * x + 1));
          out.at(n, ch, y, x) = m;
        }
  return out;
}

Tensor naive_global_avg_pool(const Tensor& input) {
  const std::size_t batch = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  Tensor out({batch, c});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) s += input.at(n, ch, y, x);
      out[n * c + ch] = static_cast<float>(s / static_cast<double>(h * w));
    }
  return out;
}

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo, float hi) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(shape);
  for (float& v : t.data()) v = dist(rng);
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

std::uint64_t conv_params(std::uint64_t k, std::uint64_t cin, std::uint64_t cout, bool bias) {
  return k * k * cin * cout + (bias ? cout : 0);
}

std::uint64_t dense_params(std::uint64_t fin, std::uint64_t fout, bool bias) {
  return fin * fout + (bias ? fout : 0);
}

ModelGraph random_relu_cnn(std::mt19937_64& rng, std::size_t max_layers, std::size_t max_channels) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  SimpleCnnOptions o;
  const std::size_t convs = pick(1, std::max<std::size_t>(1, max_layers - 1));
  const std::size_t side = pick(4, 9);
  o.input_shape = {pick(1, 3), side, side};
  o.num_classes = pick(2, 5);
  o.channels.clear();
  std::size_t h = side;
  for (std::size_t i = 0; i < convs; ++i) {
    o.channels.push_back(pick(2, max_channels));
    const bool pool = h >= 2 && pick(0, 2) == 0;
    o.pool_after.push_back(pool);
    if (pool) h /= 2;
  }
  o.kernel = pick(0, 1) ? 3 : 1;
  o.bias = false;
  o.batchnorm = false;
  o.flatten_head = pick(0, 1) == 1;
  o.hidden = 0;
  o.seed = rng();
  return build_simple_cnn(o);
}

ModelGraph mask_filters(const ModelGraph& model, const PruningStep& step) {
  ModelGraph masked = model;
  Layer& layer = masked.layer(step.layer_id);
  Tensor& w = layer.params.at("weight");
  const std::size_t per_filter = w.numel() / w.dim(0);
  for (std::size_t f : step.indices) {
    std::fill(w.ptr() + f * per_filter, w.ptr() + (f + 1) * per_filter, 0.0f);
    if (layer.bias) layer.params.at("bias")[f] = 0.0f;
  }
  return masked;
}

MaskingCase masking_equivalence_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const ModelGraph model = random_relu_cnn(rng, 4, 8);
  std::vector<std::string> candidates;
  for (const Layer& l : model.layers)
    if (l.prunable && l.out_channels >= 2) candidates.push_back(l.id);
  MaskingCase result;
  if (candidates.empty()) return result;
  const std::string id =
      candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
  const std::size_t n = model.layer(id).out_channels;
  const std::size_t m = std::uniform_int_distribution<std::size_t>(1, n - 1)(rng);
  const PruningStep step = resolve_step(model, PruneRequest{id, m, std::nullopt});
  const ModelGraph pruned = prune_filters(model, step);
  const ModelGraph masked = mask_filters(model, step);
  Shape batch_shape{std::uniform_int_distribution<std::size_t>(1, 4)(rng)};
  batch_shape.insert(batch_shape.end(), model.input_shape.begin(), model.input_shape.end());
  const Tensor x = random_tensor(batch_shape, rng);
  result.max_error = max_abs_diff(predict(pruned, x), predict(masked, x));
  result.layer_id = id;
  result.removed = m;
  return result;
}

}  // namespace prunekit::testing
