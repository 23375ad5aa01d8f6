#include "oracles.hpp"

#include <cmath>
#include <numbers>

namespace oracle {

namespace {

using Mat = std::vector<std::vector<double>>;

Mat linear(const Mat& x, const std::vector<double>& w, const std::vector<double>& b,
           std::size_t in, std::size_t out) {
  Mat y(x.size(), std::vector<double>(out, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t k = 0; k < in; ++k) acc += x[i][k] * w[k * out + o];
      y[i][o] = acc;
    }
  return y;
}

Mat layer_norm(const Mat& x, const std::vector<double>& g, const std::vector<double>& b) {
  const std::size_t d = x.empty() ? 0 : x[0].size();
  Mat y(x.size(), std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mean = 0.0;
    for (double v : x[i]) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double r = 1.0 / std::sqrt(var + 1e-6);
    for (std::size_t j = 0; j < d; ++j) y[i][j] = g[j] * (x[i][j] - mean) * r + b[j];
  }
  return y;
}

Mat transformer_block(const mgm::mae::BlockP& p, const Mat& x_in, std::size_t dim,
                      std::size_t heads) {
  const std::size_t n = x_in.size();
  const std::size_t dh = dim / heads;

  const Mat a_in = layer_norm(x_in, p.ln1_g, p.ln1_b);
  const Mat q = linear(a_in, p.q.w, p.q.b, dim, dim);
  const Mat k = linear(a_in, p.k.w, p.k.b, dim, dim);
  const Mat v = linear(a_in, p.v.w, p.v.b, dim, dim);

  Mat att(n, std::vector<double>(dim, 0.0));
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logits(n);
      double mx = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += q[i][h * dh + d] * k[j][h * dh + d];
        logits[j] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, logits[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        logits[j] = std::exp(logits[j] - mx);
        denom += logits[j];
      }
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t d = 0; d < dh; ++d)
          att[i][h * dh + d] += logits[j] / denom * v[j][h * dh + d];
    }
  const Mat proj = linear(att, p.proj.w, p.proj.b, dim, dim);

  Mat x_mid(n, std::vector<double>(dim));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j) x_mid[i][j] = x_in[i][j] + proj[i][j];

  const Mat m_in = layer_norm(x_mid, p.ln2_g, p.ln2_b);
  Mat hidden = linear(m_in, p.fc1.w, p.fc1.b, dim, 4 * dim);
  for (auto& row : hidden)
    for (double& hv : row) hv = 0.5 * hv * (1.0 + std::erf(hv / std::numbers::sqrt2));
  const Mat mlp = linear(hidden, p.fc2.w, p.fc2.b, 4 * dim, dim);

  Mat x_out(n, std::vector<double>(dim));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j) x_out[i][j] = x_mid[i][j] + mlp[i][j];
  return x_out;
}

}  // namespace

double mae_loss_reference(const mgm::mae::ToyMae& m, const mgm::Tensor& clip,
                          const mgm::maskgen::TokenMask& mask) {
  const std::size_t frames = clip.dim(0), height = clip.dim(2), width = clip.dim(3);
  const std::size_t slices = frames / 2, rows = height / 16, cols = width / 16;
  const std::size_t n = slices * rows * cols;
  const std::size_t cube_dim = 2 * 16 * 16 * 3;

  Mat cubes(n, std::vector<double>(cube_dim));
  std::size_t cube = 0;
  for (std::size_t s = 0; s < slices; ++s)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c, ++cube) {
        std::size_t e = 0;
        for (std::size_t dt = 0; dt < 2; ++dt)
          for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t y = 0; y < 16; ++y)
              for (std::size_t x = 0; x < 16; ++x)
                cubes[cube][e++] = clip.at(2 * s + dt, ch, 16 * r + y, 16 * c + x);
      }

  Mat targets(n, std::vector<double>(cube_dim));
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (double v : cubes[i]) mean += v;
    mean /= static_cast<double>(cube_dim);
    double var = 0.0;
    for (double v : cubes[i]) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cube_dim);
    const double r = 1.0 / std::sqrt(var + m.cfg.norm_eps);
    for (std::size_t j = 0; j < cube_dim; ++j) targets[i][j] = (cubes[i][j] - mean) * r;
  }

  std::vector<std::size_t> vis, masked;
  for (std::size_t i = 0; i < n; ++i)
    (mask.visible[i] ? vis : masked).push_back(i);

  Mat enc_in(vis.size());
  for (std::size_t i = 0; i < vis.size(); ++i) enc_in[i] = cubes[vis[i]];
  Mat x = linear(enc_in, m.embed.w, m.embed.b, cube_dim, m.cfg.embed_dim);
  for (std::size_t i = 0; i < vis.size(); ++i)
    for (std::size_t j = 0; j < m.cfg.embed_dim; ++j)
      x[i][j] += m.pe_enc[vis[i] * m.cfg.embed_dim + j];

  for (const mgm::mae::BlockP& blk : m.enc)
    x = transformer_block(blk, x, m.cfg.embed_dim, m.cfg.heads);
  x = layer_norm(x, m.enc_ln_g, m.enc_ln_b);
  const Mat bridged = linear(x, m.bridge.w, m.bridge.b, m.cfg.embed_dim, m.cfg.dec_dim);

  Mat dec(n, std::vector<double>(m.cfg.dec_dim));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m.cfg.dec_dim; ++j) dec[i][j] = m.mask_token[j];
  for (std::size_t i = 0; i < vis.size(); ++i) dec[vis[i]] = bridged[i];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m.cfg.dec_dim; ++j)
      dec[i][j] += m.pe_dec[i * m.cfg.dec_dim + j];

  for (const mgm::mae::BlockP& blk : m.dec)
    dec = transformer_block(blk, dec, m.cfg.dec_dim, m.cfg.heads);
  dec = layer_norm(dec, m.dec_ln_g, m.dec_ln_b);
  const Mat preds = linear(dec, m.head.w, m.head.b, m.cfg.dec_dim, cube_dim);

  double loss = 0.0;
  for (std::size_t idx : masked)
    for (std::size_t j = 0; j < cube_dim; ++j) {
      const double e = preds[idx][j] - targets[idx][j];
      loss += e * e;
    }
  return loss / (static_cast<double>(masked.size()) * static_cast<double>(cube_dim));
}

}  // namespace oracle
