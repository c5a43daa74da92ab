#pragma once

#include <cstdint>
#include <vector>

#include "corrbalance/numeric.hpp"

namespace corrbalance {

struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t model_dim = 32;
  std::size_t ff_hidden_dim = 64;
  bool use_layer_norm = true;
};

/// Object nodes of one scene: pooled features plus normalized boxes
/// (x1,y1,x2,y2 in [0,1], x1<x2, y1<y2).
struct NodeSet {
  Matrix features;  // N x raw_dim
  Matrix boxes;     // N x 4
};

struct AttentionHead {
  Matrix wq, wk, wv;  // d x d_head
  // No key bias: it only shifts each score row by a constant, which the
  // row softmax cancels.
  Vector bq, bv;
};

struct EncoderLayer {
  std::vector<AttentionHead> heads;
  Matrix wo;  // d x d output projection
  Vector bo;
  Matrix ff_w1;  // d x ff_hidden
  Vector ff_b1;
  Matrix ff_w2;  // ff_hidden x d
  Vector ff_b2;
  // Pre-sublayer normalization parameters; empty when disabled.
  Vector ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

struct SpatialNet {
  Matrix w1;  // 4 x d
  Vector b1;
  Matrix w2;  // d x d
  Vector b2;
};

/// Stacked residual self-attention encoders over the fully connected node
/// graph, with an input projection and a spatial fusion network.
struct EncoderStack {
  EncoderConfig config;
  std::size_t raw_dim = 0;
  Matrix input_w;  // raw_dim x d
  Vector input_b;
  SpatialNet spatial;
  std::vector<EncoderLayer> layers;
};

EncoderStack make_encoder_stack(const EncoderConfig& config, std::size_t raw_dim,
                                std::uint64_t seed);

/// Same shapes, all parameters zero. Used as a gradient accumulator.
EncoderStack zeros_like(const EncoderStack& stack);

/// All parameter arrays in a fixed traversal order.
std::vector<Vector*> param_arrays(EncoderStack& stack);
std::vector<const Vector*> param_arrays(const EncoderStack& stack);

Vector flatten_params(const EncoderStack& stack);
void unflatten_params(EncoderStack& stack, std::span<const double> flat);

/// dst += alpha * src over every parameter array.
void axpy_params(EncoderStack& dst, double alpha, const EncoderStack& src);

struct LayerNormCache {
  Matrix xhat;
  Vector inv_std;
};

struct AttentionCache {
  Matrix input;               // sublayer input (post-norm when enabled)
  std::vector<Matrix> q, k, v;
  std::vector<Matrix> attn;   // per head, row-stochastic N x N
  Matrix concat;
};

struct FeedForwardCache {
  Matrix input;
  Matrix pre_act;
  Matrix hidden;
};

struct EncoderLayerCache {
  Matrix h_in;
  LayerNormCache ln1;
  AttentionCache attn;
  Matrix h_hat;
  LayerNormCache ln2;
  FeedForwardCache ff;
};

struct StackCache {
  bool populated = false;
  Matrix spatial_pre_act;
  Matrix spatial_hidden;
  Matrix fused;
  std::vector<EncoderLayerCache> layers;
};

/// project(features) + spatial_net(boxes), element-wise.
Matrix fuse_spatial(const NodeSet& nodes, const EncoderStack& stack, StackCache* cache = nullptr);

Matrix encoder_layer_forward(const Matrix& h_prev, const EncoderLayer& layer,
                             const EncoderConfig& config, EncoderLayerCache* cache = nullptr);

/// Full pass: spatial fusion followed by every encoder layer.
Matrix stack_forward(const NodeSet& nodes, const EncoderStack& stack, StackCache* cache = nullptr);

struct StackGradients {
  EncoderStack params;  // same shapes as the stack, holding gradients
  Matrix features;      // N x raw_dim gradient of the raw node features
};

/// Exact analytic gradients for all parameters and the input features.
/// Requires the cache produced by stack_forward.
StackGradients stack_backward(const NodeSet& nodes, const EncoderStack& stack,
                              const StackCache& cache, const Matrix& upstream);

}  // namespace corrbalance
