#include "mgmask/mae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mgmask/errors.hpp"
#include "mgmask/vten.hpp"

namespace mgm::mae {

namespace {

constexpr double kLnEps = 1e-6;

// c[m,n] = a[m,k] * b[k,n]; accumulates when acc is true.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool acc = false) {
  if (!acc) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      if (av == 0.0) continue;
      const double* bk = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

// c[m,n] = a[m,k] * b[n,k]^T.
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      const double* ai = a + i * k;
      const double* bj = b + j * k;
      for (std::size_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
      c[i * n + j] = acc;
    }
}

// c[k,n] += a[m,k]^T * b[m,n].
void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      if (av == 0.0) continue;
      double* ck = c + kk * n;
      for (std::size_t j = 0; j < n; ++j) ck[j] += av * bi[j];
    }
  }
}

void linear_forward(const LinearP& p, const std::vector<double>& x, std::size_t rows,
                    std::vector<double>& y) {
  y.resize(rows * p.out);
  matmul(x.data(), p.w.data(), y.data(), rows, p.in, p.out);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < p.out; ++j) y[i * p.out + j] += p.b[j];
}

// Accumulates dw/db and returns dx.
void linear_backward(const LinearP& p, LinearP& g, const std::vector<double>& x,
                     const std::vector<double>& dy, std::size_t rows, std::vector<double>& dx) {
  matmul_tn_acc(x.data(), dy.data(), g.w.data(), rows, p.in, p.out);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < p.out; ++j) g.b[j] += dy[i * p.out + j];
  dx.resize(rows * p.in);
  matmul_nt(dy.data(), p.w.data(), dx.data(), rows, p.out, p.in);
}

struct LnCache {
  std::vector<double> xhat;  // [rows, d]
  std::vector<double> rstd;  // [rows]
};

void layernorm_forward(const std::vector<double>& x, std::size_t rows, std::size_t d,
                       const std::vector<double>& gamma, const std::vector<double>& beta,
                       LnCache& c, std::vector<double>& y) {
  c.xhat.resize(rows * d);
  c.rstd.resize(rows);
  y.resize(rows * d);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xi = x.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(d);
    const double r = 1.0 / std::sqrt(var + kLnEps);
    c.rstd[i] = r;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (xi[j] - mean) * r;
      c.xhat[i * d + j] = xh;
      y[i * d + j] = gamma[j] * xh + beta[j];
    }
  }
}

void layernorm_backward(const std::vector<double>& dy, std::size_t rows, std::size_t d,
                        const std::vector<double>& gamma, const LnCache& c,
                        std::vector<double>& dgamma, std::vector<double>& dbeta,
                        std::vector<double>& dx) {
  dx.resize(rows * d);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* dyi = dy.data() + i * d;
    const double* xh = c.xhat.data() + i * d;
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dgamma[j] += dyi[j] * xh[j];
      dbeta[j] += dyi[j];
      const double dxh = dyi[j] * gamma[j];
      sum_dxhat += dxh;
      sum_dxhat_xhat += dxh * xh[j];
    }
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = dyi[j] * gamma[j];
      dx[i * d + j] = c.rstd[i] * (dxh - sum_dxhat * inv_d - xh[j] * sum_dxhat_xhat * inv_d);
    }
  }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) +
         x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

struct BlockCache {
  LnCache ln1, ln2;
  std::vector<double> ln1_out, ln2_out;
  std::vector<double> q, k, v;
  std::vector<double> probs;       // [heads, n, n] softmax rows
  std::vector<double> att_concat;  // [n, dim] pre-projection
  std::vector<double> x_mid;       // after attention residual
  std::vector<double> h_pre, h_act;
};

// x is updated in place to the block output.
void block_forward(const BlockP& p, std::size_t n, std::size_t dim, std::size_t heads,
                   std::vector<double>& x, BlockCache& c) {
  const std::size_t dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  layernorm_forward(x, n, dim, p.ln1_g, p.ln1_b, c.ln1, c.ln1_out);
  linear_forward(p.q, c.ln1_out, n, c.q);
  linear_forward(p.k, c.ln1_out, n, c.k);
  linear_forward(p.v, c.ln1_out, n, c.v);

  c.probs.assign(heads * n * n, 0.0);
  c.att_concat.assign(n * dim, 0.0);
  std::vector<double> row(n);
  for (std::size_t h = 0; h < heads; ++h) {
    double* probs = c.probs.data() + h * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double* qi = c.q.data() + i * dim + h * dh;
      double mx = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        const double* kj = c.k.data() + j * dim + h * dh;
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
        row[j] = s * scale;
        mx = std::max(mx, row[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - mx);
        denom += row[j];
      }
      double* pi = probs + i * n;
      for (std::size_t j = 0; j < n; ++j) pi[j] = row[j] / denom;
      double* oi = c.att_concat.data() + i * dim + h * dh;
      for (std::size_t j = 0; j < n; ++j) {
        const double pj = pi[j];
        if (pj == 0.0) continue;
        const double* vj = c.v.data() + j * dim + h * dh;
        for (std::size_t d = 0; d < dh; ++d) oi[d] += pj * vj[d];
      }
    }
  }

  std::vector<double> proj_out;
  linear_forward(p.proj, c.att_concat, n, proj_out);
  for (std::size_t i = 0; i < n * dim; ++i) x[i] += proj_out[i];
  c.x_mid = x;

  layernorm_forward(x, n, dim, p.ln2_g, p.ln2_b, c.ln2, c.ln2_out);
  linear_forward(p.fc1, c.ln2_out, n, c.h_pre);
  c.h_act.resize(c.h_pre.size());
  for (std::size_t i = 0; i < c.h_pre.size(); ++i) c.h_act[i] = gelu(c.h_pre[i]);
  std::vector<double> mlp_out;
  linear_forward(p.fc2, c.h_act, n, mlp_out);
  for (std::size_t i = 0; i < n * dim; ++i) x[i] += mlp_out[i];
}

// dx is updated in place from d(block output) to d(block input).
void block_backward(const BlockP& p, BlockP& g, std::size_t n, std::size_t dim,
                    std::size_t heads, const BlockCache& c, std::vector<double>& dx) {
  const std::size_t dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // MLP branch.
  std::vector<double> dh_act;
  linear_backward(p.fc2, g.fc2, c.h_act, dx, n, dh_act);
  std::vector<double> dh_pre(dh_act.size());
  for (std::size_t i = 0; i < dh_act.size(); ++i) dh_pre[i] = dh_act[i] * gelu_grad(c.h_pre[i]);
  std::vector<double> dln2_out;
  linear_backward(p.fc1, g.fc1, c.ln2_out, dh_pre, n, dln2_out);
  std::vector<double> dx_mid;
  layernorm_backward(dln2_out, n, dim, p.ln2_g, c.ln2, g.ln2_g, g.ln2_b, dx_mid);
  for (std::size_t i = 0; i < n * dim; ++i) dx_mid[i] += dx[i];

  // Attention branch.
  std::vector<double> datt;
  linear_backward(p.proj, g.proj, c.att_concat, dx_mid, n, datt);

  std::vector<double> dq(n * dim, 0.0), dk(n * dim, 0.0), dv(n * dim, 0.0);
  std::vector<double> dp(n), ds(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const double* probs = c.probs.data() + h * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double* pi = probs + i * n;
      const double* doi = datt.data() + i * dim + h * dh;
      // dV += P^T dO and dP = dO V^T, row by row.
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double* vj = c.v.data() + j * dim + h * dh;
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += doi[d] * vj[d];
        dp[j] = s;
        dot += s * pi[j];
        double* dvj = dv.data() + j * dim + h * dh;
        for (std::size_t d = 0; d < dh; ++d) dvj[d] += pi[j] * doi[d];
      }
      for (std::size_t j = 0; j < n; ++j) ds[j] = pi[j] * (dp[j] - dot);
      const double* qi = c.q.data() + i * dim + h * dh;
      double* dqi = dq.data() + i * dim + h * dh;
      for (std::size_t j = 0; j < n; ++j) {
        if (ds[j] == 0.0) continue;
        const double dsj = ds[j] * scale;
        const double* kj = c.k.data() + j * dim + h * dh;
        double* dkj = dk.data() + j * dim + h * dh;
        for (std::size_t d = 0; d < dh; ++d) {
          dqi[d] += dsj * kj[d];
          dkj[d] += dsj * qi[d];
        }
      }
    }
  }

  std::vector<double> dln1_out(n * dim, 0.0), tmp;
  linear_backward(p.q, g.q, c.ln1_out, dq, n, tmp);
  for (std::size_t i = 0; i < tmp.size(); ++i) dln1_out[i] += tmp[i];
  linear_backward(p.k, g.k, c.ln1_out, dk, n, tmp);
  for (std::size_t i = 0; i < tmp.size(); ++i) dln1_out[i] += tmp[i];
  linear_backward(p.v, g.v, c.ln1_out, dv, n, tmp);
  for (std::size_t i = 0; i < tmp.size(); ++i) dln1_out[i] += tmp[i];

  std::vector<double> dx_in;
  layernorm_backward(dln1_out, n, dim, p.ln1_g, c.ln1, g.ln1_g, g.ln1_b, dx_in);
  for (std::size_t i = 0; i < n * dim; ++i) dx[i] = dx_mid[i] + dx_in[i];
}

std::vector<double> sinusoidal_table(std::size_t positions, std::size_t dim) {
  std::vector<double> pe(positions * dim);
  for (std::size_t pos = 0; pos < positions; ++pos)
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pe[pos * dim + i] = std::sin(static_cast<double>(pos) * freq);
      if (i + 1 < dim) pe[pos * dim + i + 1] = std::cos(static_cast<double>(pos) * freq);
    }
  return pe;
}

LinearP init_linear(std::size_t in, std::size_t out, Rng& rng) {
  LinearP p;
  p.in = in;
  p.out = out;
  p.w.resize(in * out);
  p.b.assign(out, 0.0);
  const double std = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : p.w) v = std * rng.next_normal();
  return p;
}

BlockP init_block(std::size_t dim, Rng& rng) {
  BlockP b;
  b.ln1_g.assign(dim, 1.0);
  b.ln1_b.assign(dim, 0.0);
  b.ln2_g.assign(dim, 1.0);
  b.ln2_b.assign(dim, 0.0);
  b.q = init_linear(dim, dim, rng);
  b.k = init_linear(dim, dim, rng);
  b.v = init_linear(dim, dim, rng);
  b.proj = init_linear(dim, dim, rng);
  b.fc1 = init_linear(dim, 4 * dim, rng);
  b.fc2 = init_linear(4 * dim, dim, rng);
  return b;
}

struct ForwardCache {
  std::vector<std::size_t> vis, masked;
  std::vector<double> cubes;    // [N, kCubeDim]
  std::vector<double> targets;  // [N, kCubeDim]
  std::vector<double> gathered;  // [V, kCubeDim] visible cubes in feed order
  std::vector<double> enc_x;     // evolving [V, D]
  std::vector<BlockCache> enc_blocks;
  LnCache enc_ln;
  std::vector<double> enc_ln_out;
  std::vector<double> bridged;  // [V, dec_dim]
  std::vector<double> dec_x;    // evolving [N, dec_dim]
  std::vector<BlockCache> dec_blocks;
  LnCache dec_ln;
  std::vector<double> dec_ln_out;
  std::vector<double> preds;  // [N, kCubeDim]
  double loss = 0.0;
};

void run_forward(const ToyMae& m, const Tensor& clip, const maskgen::TokenMask& mask,
                 const std::vector<std::size_t>* visible_order, ForwardCache& c) {
  m.cfg.validate();
  if (clip.ndim() != 4 || clip.dim(1) != 3) throw ValidationError("clip must be [T,3,H,W]");
  const std::size_t frames = clip.dim(0), height = clip.dim(2), width = clip.dim(3);
  const std::size_t n = (frames / maskgen::kTubeDepth) * (height / maskgen::kTokenSize) *
                        (width / maskgen::kTokenSize);
  if (n != m.tokens) throw ValidationError("clip token count does not match model");
  if (mask.token_count() != n) throw ValidationError("token mask does not match clip");

  c.vis.clear();
  c.masked.clear();
  for (std::size_t i = 0; i < n; ++i)
    (mask.visible[i] ? c.vis : c.masked).push_back(i);
  if (c.vis.empty() || c.masked.empty())
    throw ValidationError("mask must leave at least one visible and one masked token");

  std::vector<std::size_t> order = c.vis;
  if (visible_order != nullptr) {
    if (visible_order->size() != c.vis.size())
      throw ValidationError("visible_order must be a permutation of the visible set");
    std::vector<std::size_t> sorted = *visible_order;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != c.vis)
      throw ValidationError("visible_order must be a permutation of the visible set");
    order = *visible_order;
  }

  const Tensor cube_t = cubify(clip);
  c.cubes = cube_t.values();
  c.targets.resize(c.cubes.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = c.cubes.data() + i * kCubeDim;
    double mean = 0.0;
    for (std::size_t j = 0; j < kCubeDim; ++j) mean += row[j];
    mean /= static_cast<double>(kCubeDim);
    double var = 0.0;
    for (std::size_t j = 0; j < kCubeDim; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(kCubeDim);
    const double r = 1.0 / std::sqrt(var + m.cfg.norm_eps);
    for (std::size_t j = 0; j < kCubeDim; ++j)
      c.targets[i * kCubeDim + j] = (row[j] - mean) * r;
  }

  const std::size_t nv = order.size();
  const std::size_t d = m.cfg.embed_dim, dd = m.cfg.dec_dim;

  c.gathered.resize(nv * kCubeDim);
  for (std::size_t i = 0; i < nv; ++i)
    std::copy(c.cubes.begin() + static_cast<std::ptrdiff_t>(order[i] * kCubeDim),
              c.cubes.begin() + static_cast<std::ptrdiff_t>((order[i] + 1) * kCubeDim),
              c.gathered.begin() + static_cast<std::ptrdiff_t>(i * kCubeDim));

  linear_forward(m.embed, c.gathered, nv, c.enc_x);
  for (std::size_t i = 0; i < nv; ++i)
    for (std::size_t j = 0; j < d; ++j) c.enc_x[i * d + j] += m.pe_enc[order[i] * d + j];

  c.enc_blocks.resize(m.enc.size());
  for (std::size_t l = 0; l < m.enc.size(); ++l)
    block_forward(m.enc[l], nv, d, m.cfg.heads, c.enc_x, c.enc_blocks[l]);
  layernorm_forward(c.enc_x, nv, d, m.enc_ln_g, m.enc_ln_b, c.enc_ln, c.enc_ln_out);
  linear_forward(m.bridge, c.enc_ln_out, nv, c.bridged);

  c.dec_x.assign(n * dd, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = c.dec_x.data() + i * dd;
    for (std::size_t j = 0; j < dd; ++j) row[j] = mask.visible[i] ? 0.0 : m.mask_token[j];
  }
  for (std::size_t i = 0; i < nv; ++i)
    std::copy(c.bridged.begin() + static_cast<std::ptrdiff_t>(i * dd),
              c.bridged.begin() + static_cast<std::ptrdiff_t>((i + 1) * dd),
              c.dec_x.begin() + static_cast<std::ptrdiff_t>(order[i] * dd));
  for (std::size_t i = 0; i < n * dd; ++i) c.dec_x[i] += m.pe_dec[i];

  c.dec_blocks.resize(m.dec.size());
  for (std::size_t l = 0; l < m.dec.size(); ++l)
    block_forward(m.dec[l], n, dd, m.cfg.heads, c.dec_x, c.dec_blocks[l]);
  layernorm_forward(c.dec_x, n, dd, m.dec_ln_g, m.dec_ln_b, c.dec_ln, c.dec_ln_out);
  linear_forward(m.head, c.dec_ln_out, n, c.preds);

  double loss = 0.0;
  for (std::size_t idx : c.masked) {
    const double* pr = c.preds.data() + idx * kCubeDim;
    const double* ta = c.targets.data() + idx * kCubeDim;
    for (std::size_t j = 0; j < kCubeDim; ++j) {
      const double e = pr[j] - ta[j];
      loss += e * e;
    }
  }
  c.loss = loss / (static_cast<double>(c.masked.size()) * static_cast<double>(kCubeDim));

  // Stash the feed order for the backward pass.
  c.vis = std::move(order);
}

}  // namespace

void MaeConfig::validate() const {
  if (embed_dim == 0 || dec_dim == 0 || heads == 0)
    throw ValidationError("model dims must be positive");
  if (embed_dim % heads != 0) throw ValidationError("embed_dim must be divisible by heads");
  if (dec_dim % heads != 0) throw ValidationError("dec_dim must be divisible by heads");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("ratio must lie in (0,1)");
  if (norm_eps <= 0.0) throw ValidationError("norm_eps must be positive");
}

ToyMae init_model(const MaeConfig& cfg, std::size_t tokens, Rng& rng) {
  cfg.validate();
  if (tokens == 0) throw ValidationError("token count must be positive");
  ToyMae m;
  m.cfg = cfg;
  m.tokens = tokens;
  m.embed = init_linear(kCubeDim, cfg.embed_dim, rng);
  for (std::size_t i = 0; i < cfg.enc_depth; ++i) m.enc.push_back(init_block(cfg.embed_dim, rng));
  m.enc_ln_g.assign(cfg.embed_dim, 1.0);
  m.enc_ln_b.assign(cfg.embed_dim, 0.0);
  m.bridge = init_linear(cfg.embed_dim, cfg.dec_dim, rng);
  m.mask_token.resize(cfg.dec_dim);
  for (double& v : m.mask_token) v = 0.02 * rng.next_normal();
  for (std::size_t i = 0; i < cfg.dec_depth; ++i) m.dec.push_back(init_block(cfg.dec_dim, rng));
  m.dec_ln_g.assign(cfg.dec_dim, 1.0);
  m.dec_ln_b.assign(cfg.dec_dim, 0.0);
  m.head = init_linear(cfg.dec_dim, kCubeDim, rng);
  m.pe_enc = sinusoidal_table(tokens, cfg.embed_dim);
  m.pe_dec = sinusoidal_table(tokens, cfg.dec_dim);
  return m;
}

ToyMae zeros_like(const ToyMae& model) {
  ToyMae z = model;
  visit_params(z, [](const std::string&, std::vector<double>& v, const std::vector<std::size_t>&) {
    std::fill(v.begin(), v.end(), 0.0);
  });
  return z;
}

Tensor cubify(const Tensor& clip) {
  if (clip.ndim() != 4 || clip.dim(1) != 3) throw ValidationError("clip must be [T,3,H,W]");
  const std::size_t frames = clip.dim(0), height = clip.dim(2), width = clip.dim(3);
  if (frames % maskgen::kTubeDepth != 0 || height % maskgen::kTokenSize != 0 ||
      width % maskgen::kTokenSize != 0)
    throw ValidationError("clip dims must be divisible by the cube size");
  const std::size_t slices = frames / maskgen::kTubeDepth;
  const std::size_t rows = height / maskgen::kTokenSize, cols = width / maskgen::kTokenSize;
  Tensor out({slices * rows * cols, kCubeDim});
  std::size_t cube = 0;
  for (std::size_t s = 0; s < slices; ++s)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t col = 0; col < cols; ++col, ++cube) {
        double* dst = out.data() + cube * kCubeDim;
        for (std::size_t dt = 0; dt < maskgen::kTubeDepth; ++dt)
          for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t y = 0; y < maskgen::kTokenSize; ++y)
              for (std::size_t x = 0; x < maskgen::kTokenSize; ++x)
                *dst++ = clip.at(s * maskgen::kTubeDepth + dt, ch, r * maskgen::kTokenSize + y,
                                 col * maskgen::kTokenSize + x);
      }
  return out;
}

Tensor decubify(const Tensor& cubes, std::size_t frames, std::size_t height, std::size_t width) {
  const std::size_t slices = frames / maskgen::kTubeDepth;
  const std::size_t rows = height / maskgen::kTokenSize, cols = width / maskgen::kTokenSize;
  if (cubes.ndim() != 2 || cubes.dim(0) != slices * rows * cols || cubes.dim(1) != kCubeDim)
    throw ValidationError("cube tensor does not match clip dims");
  Tensor clip({frames, 3, height, width});
  std::size_t cube = 0;
  for (std::size_t s = 0; s < slices; ++s)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t col = 0; col < cols; ++col, ++cube) {
        const double* src = cubes.data() + cube * kCubeDim;
        for (std::size_t dt = 0; dt < maskgen::kTubeDepth; ++dt)
          for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t y = 0; y < maskgen::kTokenSize; ++y)
              for (std::size_t x = 0; x < maskgen::kTokenSize; ++x)
                clip.at(s * maskgen::kTubeDepth + dt, ch, r * maskgen::kTokenSize + y,
                        col * maskgen::kTokenSize + x) = *src++;
      }
  return clip;
}

ForwardResult forward(const ToyMae& model, const Tensor& clip, const maskgen::TokenMask& mask,
                      const std::vector<std::size_t>* visible_order) {
  ForwardCache c;
  run_forward(model, clip, mask, visible_order, c);
  ForwardResult res;
  res.recon = Tensor({model.tokens, kCubeDim}, std::move(c.preds));
  res.loss = c.loss;
  return res;
}

double forward_backward(const ToyMae& m, const Tensor& clip, const maskgen::TokenMask& mask,
                        ToyMae& g) {
  ForwardCache c;
  run_forward(m, clip, mask, nullptr, c);

  const std::size_t n = m.tokens, nv = c.vis.size();
  const std::size_t d = m.cfg.embed_dim, dd = m.cfg.dec_dim;

  std::vector<double> dpreds(n * kCubeDim, 0.0);
  const double w = 2.0 / (static_cast<double>(c.masked.size()) * static_cast<double>(kCubeDim));
  for (std::size_t idx : c.masked)
    for (std::size_t j = 0; j < kCubeDim; ++j)
      dpreds[idx * kCubeDim + j] =
          w * (c.preds[idx * kCubeDim + j] - c.targets[idx * kCubeDim + j]);

  std::vector<double> d_dec_ln_out;
  linear_backward(m.head, g.head, c.dec_ln_out, dpreds, n, d_dec_ln_out);
  std::vector<double> d_dec_x;
  layernorm_backward(d_dec_ln_out, n, dd, m.dec_ln_g, c.dec_ln, g.dec_ln_g, g.dec_ln_b, d_dec_x);
  for (std::size_t l = m.dec.size(); l-- > 0;)
    block_backward(m.dec[l], g.dec[l], n, dd, m.cfg.heads, c.dec_blocks[l], d_dec_x);

  // Split decoder input gradient into bridged latents and the mask token.
  std::vector<double> d_bridged(nv * dd);
  for (std::size_t i = 0; i < nv; ++i)
    std::copy(d_dec_x.begin() + static_cast<std::ptrdiff_t>(c.vis[i] * dd),
              d_dec_x.begin() + static_cast<std::ptrdiff_t>((c.vis[i] + 1) * dd),
              d_bridged.begin() + static_cast<std::ptrdiff_t>(i * dd));
  for (std::size_t idx : c.masked)
    for (std::size_t j = 0; j < dd; ++j) g.mask_token[j] += d_dec_x[idx * dd + j];

  std::vector<double> d_enc_ln_out;
  linear_backward(m.bridge, g.bridge, c.enc_ln_out, d_bridged, nv, d_enc_ln_out);
  std::vector<double> d_enc_x;
  layernorm_backward(d_enc_ln_out, nv, d, m.enc_ln_g, c.enc_ln, g.enc_ln_g, g.enc_ln_b, d_enc_x);
  for (std::size_t l = m.enc.size(); l-- > 0;)
    block_backward(m.enc[l], g.enc[l], nv, d, m.cfg.heads, c.enc_blocks[l], d_enc_x);

  std::vector<double> unused;
  linear_backward(m.embed, g.embed, c.gathered, d_enc_x, nv, unused);

  return c.loss;
}

void sgd_step(ToyMae& model, const ToyMae& grads, double lr) {
  auto it = [&](ToyMae& m, const ToyMae& gr) {
    std::vector<const std::vector<double>*> gvecs;
    visit_params(gr, [&](const std::string&, const std::vector<double>& v,
                         const std::vector<std::size_t>&) { gvecs.push_back(&v); });
    std::size_t i = 0;
    visit_params(m, [&](const std::string&, std::vector<double>& v,
                        const std::vector<std::size_t>&) {
      const std::vector<double>& gv = *gvecs[i++];
      for (std::size_t j = 0; j < v.size(); ++j) v[j] -= lr * gv[j];
    });
  };
  it(model, grads);
}

std::vector<double> train(ToyMae& model, const std::vector<TrainItem>& data,
                          const maskgen::MaskConfig& mask_cfg, std::size_t steps) {
  if (data.empty()) throw ValidationError("training set is empty");
  for (const TrainItem& item : data) {
    if (item.clip.ndim() != 4) throw ValidationError("training clips must be [T,3,H,W]");
    if (mask_cfg.strategy == maskgen::Strategy::MotionGuided && !item.flows.has_value())
      throw ValidationError("motion_guided training requires flows per clip");
  }

  const Rng seed_root(mask_cfg.seed);
  std::vector<double> losses;
  losses.reserve(steps);
  ToyMae grads = zeros_like(model);
  const std::size_t batch = std::max<std::size_t>(1, model.cfg.batch);

  for (std::size_t step = 0; step < steps; ++step) {
    visit_params(grads, [](const std::string&, std::vector<double>& v,
                           const std::vector<std::size_t>&) {
      std::fill(v.begin(), v.end(), 0.0);
    });
    double loss_sum = 0.0;
    for (std::size_t j = 0; j < batch; ++j) {
      const std::size_t idx = (step * batch + j) % data.size();
      const TrainItem& item = data[idx];
      maskgen::MaskConfig step_cfg = mask_cfg;
      step_cfg.seed = seed_root.fork(step + 1).fork(idx + 1).seed();
      const maskgen::TokenMask mask = maskgen::generate(
          item.clip.dim(0), item.clip.dim(2), item.clip.dim(3),
          item.flows.has_value() ? &*item.flows : nullptr, step_cfg);
      loss_sum += forward_backward(model, item.clip, mask, grads);
    }
    const double loss = loss_sum / static_cast<double>(batch);
    if (!std::isfinite(loss))
      throw NumericError("training diverged at step " + std::to_string(step) +
                         " (last finite step " + std::to_string(step == 0 ? 0 : step - 1) + ")");
    losses.push_back(loss);
    sgd_step(model, grads, model.cfg.lr / static_cast<double>(batch));
  }
  return losses;
}

void save_checkpoint(const ToyMae& model, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "mgmask-checkpoint 1\n";
  manifest << "tokens " << model.tokens << "\n";
  manifest << "embed_dim " << model.cfg.embed_dim << "\n";
  manifest << "enc_depth " << model.cfg.enc_depth << "\n";
  manifest << "heads " << model.cfg.heads << "\n";
  manifest << "dec_dim " << model.cfg.dec_dim << "\n";
  manifest << "dec_depth " << model.cfg.dec_depth << "\n";
  char eps[32];
  std::snprintf(eps, sizeof(eps), "%.17g", model.cfg.norm_eps);
  manifest << "norm_eps " << eps << "\n";

  visit_params(model, [&](const std::string& name, const std::vector<double>& v,
                          const std::vector<std::size_t>& dims) {
    const std::string file = name + ".vten";
    std::vector<double> data = v;
    write_vten(Tensor(dims, std::move(data)), (std::filesystem::path(dir) / file).string());
    manifest << "param " << name;
    manifest << " ";
    for (std::size_t i = 0; i < dims.size(); ++i) manifest << (i ? "x" : "") << dims[i];
    manifest << " " << file << "\n";
  });

  std::ofstream out(std::filesystem::path(dir) / "manifest.txt");
  if (!out) throw IoError("cannot write checkpoint manifest in " + dir);
  out << manifest.str();
  if (!out) throw IoError("manifest write failed in " + dir);
}

ToyMae load_checkpoint(const std::string& dir) {
  std::ifstream in(std::filesystem::path(dir) / "manifest.txt");
  if (!in) throw IoError("cannot open checkpoint manifest in " + dir);
  std::string line;
  if (!std::getline(in, line) || line != "mgmask-checkpoint 1")
    throw FormatError("unrecognized checkpoint manifest");

  MaeConfig cfg;
  std::size_t tokens = 0;
  std::vector<std::pair<std::string, std::string>> params;  // name -> file
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "tokens") ls >> tokens;
    else if (key == "embed_dim") ls >> cfg.embed_dim;
    else if (key == "enc_depth") ls >> cfg.enc_depth;
    else if (key == "heads") ls >> cfg.heads;
    else if (key == "dec_dim") ls >> cfg.dec_dim;
    else if (key == "dec_depth") ls >> cfg.dec_depth;
    else if (key == "norm_eps") ls >> cfg.norm_eps;
    else if (key == "param") {
      std::string name, dims, file;
      ls >> name >> dims >> file;
      params.emplace_back(name, file);
    } else {
      throw FormatError("unknown manifest key '" + key + "'");
    }
  }

  Rng rng(0);
  ToyMae model = init_model(cfg, tokens, rng);
  std::size_t next = 0;
  visit_params(model, [&](const std::string& name, std::vector<double>& v,
                          const std::vector<std::size_t>&) {
    if (next >= params.size() || params[next].first != name)
      throw FormatError("checkpoint manifest is missing parameter '" + name + "'");
    const Tensor t = read_vten((std::filesystem::path(dir) / params[next].second).string());
    if (t.numel() != v.size())
      throw FormatError("checkpoint parameter '" + name + "' has wrong size");
    std::copy(t.values().begin(), t.values().end(), v.begin());
    ++next;
  });
  if (next != params.size()) throw FormatError("checkpoint manifest lists extra parameters");
  return model;
}

void write_loss_csv(const std::vector<double>& losses, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, losses[i]);
    out << buf;
  }
  if (!out) throw IoError("write failed on " + path);
}

}  // namespace mgm::mae
