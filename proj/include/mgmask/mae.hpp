#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mgmask/mask.hpp"
#include "mgmask/rng.hpp"
#include "mgmask/tensor.hpp"

namespace mgm::mae {

// Flattened cube length: 2 frames x 16x16 pixels x 3 channels.
constexpr std::size_t kCubeDim = maskgen::kTubeDepth * maskgen::kTokenSize * maskgen::kTokenSize * 3;

struct MaeConfig {
  std::size_t embed_dim = 64;
  std::size_t enc_depth = 3;
  std::size_t heads = 4;
  std::size_t dec_dim = 32;
  std::size_t dec_depth = 1;
  double ratio = 0.9;
  double norm_eps = 1e-6;  // target normalization epsilon
  double lr = 0.1;
  std::size_t steps = 100;
  std::size_t batch = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LinearP {
  std::size_t in = 0, out = 0;
  std::vector<double> w;  // [in, out]
  std::vector<double> b;  // [out]
};

// Pre-norm transformer block: x += proj(attn(LN1(x))); x += mlp(LN2(x)).
struct BlockP {
  std::vector<double> ln1_g, ln1_b, ln2_g, ln2_b;
  LinearP q, k, v, proj;
  LinearP fc1, fc2;  // MLP ratio 4, GELU
};

struct ToyMae {
  MaeConfig cfg;
  std::size_t tokens = 0;  // N; fixes the positional tables

  LinearP embed;  // kCubeDim -> D
  std::vector<BlockP> enc;
  std::vector<double> enc_ln_g, enc_ln_b;
  LinearP bridge;  // D -> dec_dim
  std::vector<double> mask_token;  // [dec_dim]
  std::vector<BlockP> dec;
  std::vector<double> dec_ln_g, dec_ln_b;
  LinearP head;  // dec_dim -> kCubeDim

  // Fixed sinusoidal tables over the flattened token index; not parameters.
  std::vector<double> pe_enc;  // [N, D]
  std::vector<double> pe_dec;  // [N, dec_dim]
};

ToyMae init_model(const MaeConfig& cfg, std::size_t tokens, Rng& rng);
ToyMae zeros_like(const ToyMae& model);

// Applies f(name, values, dims) to every learnable parameter in a fixed
// order. Positional tables are excluded.
template <class F>
void visit_params(ToyMae& m, F&& f) {
  const auto lin = [&](const std::string& name, LinearP& l) {
    f(name + ".w", l.w, std::vector<std::size_t>{l.in, l.out});
    f(name + ".b", l.b, std::vector<std::size_t>{l.out});
  };
  const auto vec = [&](const std::string& name, std::vector<double>& v) {
    f(name, v, std::vector<std::size_t>{v.size()});
  };
  const auto block = [&](const std::string& name, BlockP& b) {
    vec(name + ".ln1.g", b.ln1_g);
    vec(name + ".ln1.b", b.ln1_b);
    lin(name + ".q", b.q);
    lin(name + ".k", b.k);
    lin(name + ".v", b.v);
    lin(name + ".proj", b.proj);
    vec(name + ".ln2.g", b.ln2_g);
    vec(name + ".ln2.b", b.ln2_b);
    lin(name + ".fc1", b.fc1);
    lin(name + ".fc2", b.fc2);
  };
  lin("embed", m.embed);
  for (std::size_t i = 0; i < m.enc.size(); ++i) block("enc" + std::to_string(i), m.enc[i]);
  vec("enc_ln.g", m.enc_ln_g);
  vec("enc_ln.b", m.enc_ln_b);
  lin("bridge", m.bridge);
  vec("mask_token", m.mask_token);
  for (std::size_t i = 0; i < m.dec.size(); ++i) block("dec" + std::to_string(i), m.dec[i]);
  vec("dec_ln.g", m.dec_ln_g);
  vec("dec_ln.b", m.dec_ln_b);
  lin("head", m.head);
}

template <class F>
void visit_params(const ToyMae& m, F&& f) {
  visit_params(const_cast<ToyMae&>(m),
               [&](const std::string& name, std::vector<double>& v,
                   const std::vector<std::size_t>& dims) {
                 f(name, static_cast<const std::vector<double>&>(v), dims);
               });
}

// Non-overlapping cube partition of a [T,3,H,W] clip, row-major over
// (slice, row, col); within a cube the order is (frame, channel, y, x).
Tensor cubify(const Tensor& clip);
Tensor decubify(const Tensor& cubes, std::size_t frames, std::size_t height, std::size_t width);

struct ForwardResult {
  Tensor recon;  // [N, kCubeDim]
  double loss = 0.0;
};

// Runs the masked autoencoding forward pass; loss is the mean squared error
// against per-cube normalized targets over masked positions only. When
// visible_order is given it permutes the encoder's input sequence (it must
// be a permutation of the mask's visible indices).
ForwardResult forward(const ToyMae& model, const Tensor& clip, const maskgen::TokenMask& mask,
                      const std::vector<std::size_t>* visible_order = nullptr);

// Forward plus analytic gradients accumulated into grads (a zeros_like
// clone or a running sum); returns the loss.
double forward_backward(const ToyMae& model, const Tensor& clip, const maskgen::TokenMask& mask,
                        ToyMae& grads);

void sgd_step(ToyMae& model, const ToyMae& grads, double lr);

struct TrainItem {
  Tensor clip;
  std::optional<flow::FlowSet> flows;
};

// Plain SGD with a fresh mask per clip per step; returns the per-step mean
// batch loss. Throws NumericError on divergence.
std::vector<double> train(ToyMae& model, const std::vector<TrainItem>& data,
                          const maskgen::MaskConfig& mask_cfg, std::size_t steps);

void save_checkpoint(const ToyMae& model, const std::string& dir);
ToyMae load_checkpoint(const std::string& dir);

void write_loss_csv(const std::vector<double>& losses, const std::string& path);

}  // namespace mgm::mae
