#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "avse/error.hpp"
#include "avse/matrix.hpp"
#include "avse/rng.hpp"

namespace avse {

enum class Activation { Linear, Tanh, Relu };

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Matrix activate(const Matrix& pre, Activation act) {
  switch (act) {
    case Activation::Linear: return pre;
    case Activation::Tanh: return pre.array().tanh().matrix();
    case Activation::Relu: return pre.cwiseMax(0.0);
  }
  return pre;
}

// dL/dpre given dL/dy, the pre-activation and the output.
inline Matrix activation_backward(const Matrix& dy, const Matrix& pre, const Matrix& y, Activation act) {
  switch (act) {
    case Activation::Linear: return dy;
    case Activation::Tanh: return dy.array() * (1.0 - y.array().square());
    case Activation::Relu: return (pre.array() > 0.0).select(dy, 0.0);
  }
  return dy;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

struct DenseCache {
  Matrix x, pre, y;
};

// x: B x in, w: in x out, b: 1 x out
inline Matrix dense_forward(const Matrix& x, const Eigen::Ref<const Matrix>& w, const Eigen::Ref<const RowVector>& b,
                            Activation act, DenseCache* cache = nullptr) {
  require(x.cols() == w.rows() && b.size() == w.cols(), ErrorKind::ShapeMismatch,
          "dense: input " + std::to_string(x.cols()) + " vs weight " + std::to_string(w.rows()) + "x" +
              std::to_string(w.cols()) + ", bias " + std::to_string(b.size()));
  Matrix pre = x * w;
  pre.rowwise() += b;
  Matrix y = activate(pre, act);
  if (cache) *cache = {x, std::move(pre), y};
  return y;
}

struct DenseGrads {
  Matrix dx, dw;
  RowVector db;
};

inline DenseGrads dense_backward(const Matrix& dy, const DenseCache& cache, const Eigen::Ref<const Matrix>& w,
                                 Activation act) {
  const Matrix dpre = activation_backward(dy, cache.pre, cache.y, act);
  return {dpre * w.transpose(), cache.x.transpose() * dpre, dpre.colwise().sum()};
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

// Gate column blocks in order [input, forget, cell, output], each `cells` wide.
struct LstmParamsView {
  Eigen::Ref<const Matrix> wx;     // in x 4n
  Eigen::Ref<const Matrix> wh;     // n x 4n
  Eigen::Ref<const RowVector> b;   // 1 x 4n

  Eigen::Index cells() const { return wh.rows(); }
};

struct LstmStepCache {
  Matrix x, h_prev, c_prev, i, f, g, o, c, tanh_c;
};

inline std::pair<Matrix, Matrix> lstm_step(const Matrix& x, const Matrix& h_prev, const Matrix& c_prev,
                                           const LstmParamsView& p, LstmStepCache* cache = nullptr) {
  const Eigen::Index n = p.cells();
  require(p.wh.cols() == 4 * n && p.wx.cols() == 4 * n && p.b.size() == 4 * n, ErrorKind::ShapeMismatch,
          "lstm: parameter shapes disagree with cell count");
  require(x.cols() == p.wx.rows() && h_prev.cols() == n && c_prev.cols() == n && h_prev.rows() == x.rows() &&
              c_prev.rows() == x.rows(),
          ErrorKind::ShapeMismatch, "lstm: input/state shapes disagree with parameters");
  Matrix z = x * p.wx + h_prev * p.wh;
  z.rowwise() += p.b;
  Matrix i = z.leftCols(n).unaryExpr([](double v) { return sigmoid(v); });
  Matrix f = z.middleCols(n, n).unaryExpr([](double v) { return sigmoid(v); });
  Matrix g = z.middleCols(2 * n, n).array().tanh().matrix();
  Matrix o = z.rightCols(n).unaryExpr([](double v) { return sigmoid(v); });
  Matrix c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  Matrix tanh_c = c.array().tanh().matrix();
  Matrix h = o.cwiseProduct(tanh_c);
  if (cache) *cache = {x, h_prev, c_prev, std::move(i), std::move(f), std::move(g), std::move(o), c, std::move(tanh_c)};
  return {std::move(h), std::move(c)};
}

struct LstmCache {
  std::vector<LstmStepCache> steps;
};

// Runs the cell over a time-major sequence from a zero state; returns every h.
inline std::vector<Matrix> lstm_forward(const std::vector<Matrix>& xs, const LstmParamsView& p,
                                        LstmCache* cache = nullptr) {
  require(!xs.empty(), ErrorKind::ShapeMismatch, "lstm: empty sequence");
  const Eigen::Index batch = xs.front().rows(), n = p.cells();
  Matrix h = Matrix::Zero(batch, n), c = Matrix::Zero(batch, n);
  std::vector<Matrix> hs;
  hs.reserve(xs.size());
  if (cache) cache->steps.resize(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    auto [h_next, c_next] = lstm_step(xs[t], h, c, p, cache ? &cache->steps[t] : nullptr);
    h = std::move(h_next);
    c = std::move(c_next);
    hs.push_back(h);
  }
  return hs;
}

struct LstmGrads {
  std::vector<Matrix> dxs;
  Matrix dwx, dwh;
  RowVector db;
};

// Backpropagation through time. dhs[t] is dL/dh_t from the layer's consumers;
// empty matrices stand for zero.
inline LstmGrads lstm_backward(const std::vector<Matrix>& dhs, const LstmCache& cache, const LstmParamsView& p) {
  const std::size_t steps = cache.steps.size();
  require(dhs.size() == steps, ErrorKind::ShapeMismatch, "lstm backward: gradient sequence length mismatch");
  const Eigen::Index n = p.cells(), batch = cache.steps.front().x.rows();
  LstmGrads g{std::vector<Matrix>(steps), Matrix::Zero(p.wx.rows(), 4 * n), Matrix::Zero(n, 4 * n),
              RowVector::Zero(4 * n)};
  Matrix dh_rec = Matrix::Zero(batch, n), dc_next = Matrix::Zero(batch, n);
  Matrix dz(batch, 4 * n);
  for (std::size_t s = steps; s-- > 0;) {
    const LstmStepCache& c = cache.steps[s];
    Matrix dh = dh_rec;
    if (dhs[s].size() != 0) dh += dhs[s];
    const Matrix dc = dh.cwiseProduct(c.o).cwiseProduct((1.0 - c.tanh_c.array().square()).matrix()) + dc_next;
    dz.leftCols(n) = (dc.cwiseProduct(c.g).array() * c.i.array() * (1.0 - c.i.array())).matrix();
    dz.middleCols(n, n) = (dc.cwiseProduct(c.c_prev).array() * c.f.array() * (1.0 - c.f.array())).matrix();
    dz.middleCols(2 * n, n) = (dc.cwiseProduct(c.i).array() * (1.0 - c.g.array().square())).matrix();
    dz.rightCols(n) = (dh.cwiseProduct(c.tanh_c).array() * c.o.array() * (1.0 - c.o.array())).matrix();
    dc_next = dc.cwiseProduct(c.f);
    g.dwx.noalias() += c.x.transpose() * dz;
    g.dwh.noalias() += c.h_prev.transpose() * dz;
    g.db += dz.colwise().sum();
    g.dxs[s] = dz * p.wx.transpose();
    dh_rec = dz * p.wh.transpose();
  }
  return g;
}

// ---------------------------------------------------------------------------
// Convolution and pooling on HWC images, one image per batch row
// ---------------------------------------------------------------------------

struct ImageShape {
  std::size_t height = 0, width = 0, channels = 0;
  std::size_t size() const { return height * width * channels; }
  bool operator==(const ImageShape&) const = default;
};

struct ConvCache {
  std::vector<Matrix> patches;  // per batch item: (h*w) x (kh*kw*cin)
  Matrix pre, y;                // B x (h*w*cout)
};

// Same-padded cross-correlation followed by ReLU. kernel is (kh*kw*cin) x cout
// with row index (dy * kw + dx) * cin + ci.
inline Matrix conv2d_forward(const Matrix& x, const ImageShape& in, std::size_t kh, std::size_t kw,
                             const Eigen::Ref<const Matrix>& kernel, const Eigen::Ref<const RowVector>& bias,
                             ConvCache* cache = nullptr) {
  require(static_cast<std::size_t>(x.cols()) == in.size(), ErrorKind::ShapeMismatch, "conv2d: input size mismatch");
  require(static_cast<std::size_t>(kernel.rows()) == kh * kw * in.channels && kernel.cols() == bias.size(),
          ErrorKind::ShapeMismatch, "conv2d: kernel shape mismatch");
  const auto h = static_cast<std::ptrdiff_t>(in.height), w = static_cast<std::ptrdiff_t>(in.width);
  const auto cin = static_cast<std::ptrdiff_t>(in.channels);
  const auto ph = static_cast<std::ptrdiff_t>(kh / 2), pw = static_cast<std::ptrdiff_t>(kw / 2);
  const Eigen::Index cout = kernel.cols();
  Matrix pre(x.rows(), h * w * cout);
  if (cache) cache->patches.resize(static_cast<std::size_t>(x.rows()));
  Matrix patches(h * w, static_cast<Eigen::Index>(kh * kw) * cin);
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    patches.setZero();
    for (std::ptrdiff_t yy = 0; yy < h; ++yy)
      for (std::ptrdiff_t xx = 0; xx < w; ++xx)
        for (std::ptrdiff_t dy = 0; dy < static_cast<std::ptrdiff_t>(kh); ++dy) {
          const std::ptrdiff_t sy = yy + dy - ph;
          if (sy < 0 || sy >= h) continue;
          for (std::ptrdiff_t dx = 0; dx < static_cast<std::ptrdiff_t>(kw); ++dx) {
            const std::ptrdiff_t sx = xx + dx - pw;
            if (sx < 0 || sx >= w) continue;
            for (std::ptrdiff_t ci = 0; ci < cin; ++ci)
              patches(yy * w + xx, (dy * static_cast<std::ptrdiff_t>(kw) + dx) * cin + ci) = x(b, (sy * w + sx) * cin + ci);
          }
        }
    Matrix out = patches * kernel;
    out.rowwise() += bias;
    pre.row(b) = Eigen::Map<const RowVector>(out.data(), out.size());
    if (cache) cache->patches[static_cast<std::size_t>(b)] = patches;
  }
  Matrix y = pre.cwiseMax(0.0);
  if (cache) {
    cache->pre = pre;
    cache->y = y;
  }
  return y;
}

struct ConvGrads {
  Matrix dx, dkernel;
  RowVector dbias;
};

inline ConvGrads conv2d_backward(const Matrix& dy, const ConvCache& cache, const ImageShape& in, std::size_t kh,
                                 std::size_t kw, const Eigen::Ref<const Matrix>& kernel) {
  const auto h = static_cast<std::ptrdiff_t>(in.height), w = static_cast<std::ptrdiff_t>(in.width);
  const auto cin = static_cast<std::ptrdiff_t>(in.channels);
  const auto ph = static_cast<std::ptrdiff_t>(kh / 2), pw = static_cast<std::ptrdiff_t>(kw / 2);
  const Eigen::Index cout = kernel.cols();
  const Matrix dpre = (cache.pre.array() > 0.0).select(dy, 0.0);
  ConvGrads g{Matrix::Zero(dy.rows(), static_cast<Eigen::Index>(in.size())), Matrix::Zero(kernel.rows(), cout),
              RowVector::Zero(cout)};
  for (Eigen::Index b = 0; b < dy.rows(); ++b) {
    const RowVector row = dpre.row(b);
    const Eigen::Map<const Matrix> dout(row.data(), h * w, cout);
    g.dkernel.noalias() += cache.patches[static_cast<std::size_t>(b)].transpose() * dout;
    g.dbias += dout.colwise().sum();
    const Matrix dpatches = dout * kernel.transpose();
    for (std::ptrdiff_t yy = 0; yy < h; ++yy)
      for (std::ptrdiff_t xx = 0; xx < w; ++xx)
        for (std::ptrdiff_t dyy = 0; dyy < static_cast<std::ptrdiff_t>(kh); ++dyy) {
          const std::ptrdiff_t sy = yy + dyy - ph;
          if (sy < 0 || sy >= h) continue;
          for (std::ptrdiff_t dx = 0; dx < static_cast<std::ptrdiff_t>(kw); ++dx) {
            const std::ptrdiff_t sx = xx + dx - pw;
            if (sx < 0 || sx >= w) continue;
            for (std::ptrdiff_t ci = 0; ci < cin; ++ci)
              g.dx(b, (sy * w + sx) * cin + ci) +=
                  dpatches(yy * w + xx, (dyy * static_cast<std::ptrdiff_t>(kw) + dx) * cin + ci);
          }
        }
  }
  return g;
}

inline ImageShape pooled_shape(const ImageShape& in) {
  return {(in.height + 1) / 2, (in.width + 1) / 2, in.channels};
}

struct PoolCache {
  std::vector<std::vector<std::size_t>> argmax;  // per batch item, per output element: input index
};

// 2x2 non-overlapping max; odd edges behave as if padded with -inf.
inline Matrix maxpool2d(const Matrix& x, const ImageShape& in, PoolCache* cache = nullptr) {
  require(static_cast<std::size_t>(x.cols()) == in.size(), ErrorKind::ShapeMismatch, "maxpool: input size mismatch");
  const ImageShape out = pooled_shape(in);
  Matrix y(x.rows(), static_cast<Eigen::Index>(out.size()));
  if (cache) cache->argmax.assign(static_cast<std::size_t>(x.rows()), std::vector<std::size_t>(out.size()));
  for (Eigen::Index b = 0; b < x.rows(); ++b)
    for (std::size_t oy = 0; oy < out.height; ++oy)
      for (std::size_t ox = 0; ox < out.width; ++ox)
        for (std::size_t c = 0; c < in.channels; ++c) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t sy = 2 * oy + dy, sx = 2 * ox + dx;
              if (sy >= in.height || sx >= in.width) continue;
              const std::size_t idx = (sy * in.width + sx) * in.channels + c;
              if (x(b, static_cast<Eigen::Index>(idx)) > best) {
                best = x(b, static_cast<Eigen::Index>(idx));
                best_idx = idx;
              }
            }
          const std::size_t o = (oy * out.width + ox) * in.channels + c;
          y(b, static_cast<Eigen::Index>(o)) = best;
          if (cache) cache->argmax[static_cast<std::size_t>(b)][o] = best_idx;
        }
  return y;
}

inline Matrix maxpool2d_backward(const Matrix& dy, const PoolCache& cache, const ImageShape& in) {
  Matrix dx = Matrix::Zero(dy.rows(), static_cast<Eigen::Index>(in.size()));
  for (Eigen::Index b = 0; b < dy.rows(); ++b)
    for (Eigen::Index o = 0; o < dy.cols(); ++o)
      dx(b, static_cast<Eigen::Index>(cache.argmax[static_cast<std::size_t>(b)][static_cast<std::size_t>(o)])) += dy(b, o);
  return dx;
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

// Inverted dropout. Returns the mask (0 or 1/(1-rate)) through `mask` so the
// backward pass can reuse it; inference leaves x untouched.
inline Matrix dropout_forward(const Matrix& x, double rate, bool training, Rng* rng, Matrix* mask = nullptr) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::InvalidArgument, "dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) {
    if (mask) *mask = Matrix::Ones(x.rows(), x.cols());
    return x;
  }
  require(rng != nullptr, ErrorKind::InvalidArgument, "training-mode dropout needs a generator");
  const double keep = 1.0 / (1.0 - rate);
  Matrix m(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng->uniform() < rate ? 0.0 : keep;
  Matrix y = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return y;
}

}  // namespace avse
