#include "corrbalance/encoder.hpp"

#include <cmath>
#include <random>

namespace corrbalance {

namespace {

constexpr double kLayerNormEps = 1e-5;

Matrix init_weight(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(rows)));
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

void validate_nodes(const NodeSet& nodes, const EncoderStack& stack) {
  if (nodes.features.rows() == 0) throw InputError("node set must contain at least one node");
  if (nodes.features.rows() != nodes.boxes.rows()) {
    throw InputError("node features and boxes disagree on node count");
  }
  if (nodes.boxes.cols() != 4) throw InputError("boxes must have 4 coordinates");
  if (nodes.features.cols() != stack.raw_dim) {
    throw DimensionError("node feature dim " + std::to_string(nodes.features.cols()) +
                         " does not match stack raw dim " + std::to_string(stack.raw_dim));
  }
  for (std::size_t i = 0; i < nodes.boxes.rows(); ++i) {
    const auto b = nodes.boxes.row(i);
    const bool ok = b[0] >= 0.0 && b[1] >= 0.0 && b[2] <= 1.0 && b[3] <= 1.0 &&
                    b[0] < b[2] && b[1] < b[3];
    if (!ok) throw InputError("invalid box at node " + std::to_string(i));
  }
}

Matrix layer_norm_forward(const Matrix& x, const Vector& gain, const Vector& bias,
                          LayerNormCache* cache) {
  const std::size_t d = x.cols();
  Matrix out(x.rows(), d);
  Matrix xhat(x.rows(), d);
  Vector inv_std(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      xhat(i, j) = (x(i, j) - mean) * is;
      out(i, j) = gain[j] * xhat(i, j) + bias[j];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, const Vector& gain,
                           Vector& dgain, Vector& dbias) {
  const std::size_t d = dy.cols();
  Matrix dx(dy.rows(), d);
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = dy(i, j) * gain[j];
      dgain[j] += dy(i, j) * cache.xhat(i, j);
      dbias[j] += dy(i, j);
      mean_dxhat += dxh;
      mean_dxhat_xhat += dxh * cache.xhat(i, j);
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = dy(i, j) * gain[j];
      dx(i, j) = cache.inv_std[i] * (dxh - mean_dxhat - cache.xhat(i, j) * mean_dxhat_xhat);
    }
  }
  return dx;
}

/// Scaled dot-product self-attention over all node pairs (self included).
Matrix attention_forward(const Matrix& x, const EncoderLayer& layer, const EncoderConfig& config,
                         AttentionCache* cache) {
  const std::size_t n = x.rows();
  const std::size_t d = config.model_dim;
  const std::size_t dh = d / config.num_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix concat(n, d);
  std::vector<Matrix> qs, ks, vs, attns;
  for (std::size_t h = 0; h < config.num_heads; ++h) {
    const AttentionHead& head = layer.heads[h];
    Matrix q = affine_forward(x, head.wq, head.bq);
    Matrix k = matmul(x, head.wk);
    Matrix v = affine_forward(x, head.wv, head.bv);
    Matrix scores = scale(matmul(q, transpose(k)), inv_sqrt_dh);
    Matrix attn = softmax_rows(scores);
    Matrix out = matmul(attn, v);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dh; ++j) concat(i, h * dh + j) = out(i, j);
    if (cache) {
      qs.push_back(std::move(q));
      ks.push_back(std::move(k));
      vs.push_back(std::move(v));
      attns.push_back(std::move(attn));
    }
  }
  if (cache) {
    cache->input = x;
    cache->q = std::move(qs);
    cache->k = std::move(ks);
    cache->v = std::move(vs);
    cache->attn = std::move(attns);
    cache->concat = concat;
  }
  return affine_forward(concat, layer.wo, layer.bo);
}

Matrix attention_backward(const Matrix& dout, const EncoderLayer& layer,
                          const EncoderConfig& config, const AttentionCache& cache,
                          EncoderLayer& grads) {
  const std::size_t n = dout.rows();
  const std::size_t d = config.model_dim;
  const std::size_t dh = d / config.num_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  AffineGrads out_proj = affine_backward(cache.concat, layer.wo, dout);
  grads.wo = add(grads.wo, out_proj.dw);
  for (std::size_t j = 0; j < d; ++j) grads.bo[j] += out_proj.db[j];

  Matrix dx(n, d);
  for (std::size_t h = 0; h < config.num_heads; ++h) {
    const AttentionHead& head = layer.heads[h];
    AttentionHead& hg = grads.heads[h];
    Matrix dhead(n, dh);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dh; ++j) dhead(i, j) = out_proj.dx(i, h * dh + j);

    const Matrix& attn = cache.attn[h];
    Matrix dattn = matmul(dhead, transpose(cache.v[h]));
    Matrix dv = matmul(transpose(attn), dhead);

    // Softmax backward per row, folding in the 1/sqrt(dh) score scale.
    Matrix dscores(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += dattn(i, j) * attn(i, j);
      for (std::size_t j = 0; j < n; ++j) {
        dscores(i, j) = attn(i, j) * (dattn(i, j) - dot) * inv_sqrt_dh;
      }
    }
    Matrix dq = matmul(dscores, cache.k[h]);
    Matrix dk = matmul(transpose(dscores), cache.q[h]);

    AffineGrads qg = affine_backward(cache.input, head.wq, dq);
    AffineGrads vg = affine_backward(cache.input, head.wv, dv);
    hg.wq = add(hg.wq, qg.dw);
    hg.wk = add(hg.wk, matmul(transpose(cache.input), dk));
    hg.wv = add(hg.wv, vg.dw);
    for (std::size_t j = 0; j < dh; ++j) {
      hg.bq[j] += qg.db[j];
      hg.bv[j] += vg.db[j];
    }
    dx = add(dx, add(qg.dx, add(matmul(dk, transpose(head.wk)), vg.dx)));
  }
  return dx;
}

Matrix feed_forward(const Matrix& x, const EncoderLayer& layer, FeedForwardCache* cache) {
  Matrix pre = affine_forward(x, layer.ff_w1, layer.ff_b1);
  Matrix hidden = pre;
  for (double& v : hidden.data()) v = v > 0.0 ? v : 0.0;
  Matrix out = affine_forward(hidden, layer.ff_w2, layer.ff_b2);
  if (cache) {
    cache->input = x;
    cache->pre_act = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return out;
}

Matrix feed_forward_backward(const Matrix& dout, const EncoderLayer& layer,
                             const FeedForwardCache& cache, EncoderLayer& grads) {
  AffineGrads g2 = affine_backward(cache.hidden, layer.ff_w2, dout);
  grads.ff_w2 = add(grads.ff_w2, g2.dw);
  for (std::size_t j = 0; j < g2.db.size(); ++j) grads.ff_b2[j] += g2.db[j];
  Matrix dpre = g2.dx;
  for (std::size_t i = 0; i < dpre.size(); ++i) {
    if (cache.pre_act.data()[i] <= 0.0) dpre.data()[i] = 0.0;
  }
  AffineGrads g1 = affine_backward(cache.input, layer.ff_w1, dpre);
  grads.ff_w1 = add(grads.ff_w1, g1.dw);
  for (std::size_t j = 0; j < g1.db.size(); ++j) grads.ff_b1[j] += g1.db[j];
  return g1.dx;
}

}  // namespace

EncoderStack make_encoder_stack(const EncoderConfig& config, std::size_t raw_dim,
                                std::uint64_t seed) {
  if (config.num_layers < 1) throw ConfigError("encoder needs at least one layer");
  if (config.num_heads == 0 || config.model_dim % config.num_heads != 0) {
    throw ConfigError("model_dim must be divisible by num_heads");
  }
  if (raw_dim == 0 || config.ff_hidden_dim == 0) throw ConfigError("encoder dims must be positive");

  std::mt19937_64 rng(seed);
  const std::size_t d = config.model_dim;
  const std::size_t dh = d / config.num_heads;

  EncoderStack stack;
  stack.config = config;
  stack.raw_dim = raw_dim;
  stack.input_w = init_weight(raw_dim, d, rng);
  stack.input_b.assign(d, 0.0);
  stack.spatial.w1 = init_weight(4, d, rng);
  stack.spatial.b1.assign(d, 0.0);
  stack.spatial.w2 = init_weight(d, d, rng);
  stack.spatial.b2.assign(d, 0.0);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    EncoderLayer layer;
    for (std::size_t h = 0; h < config.num_heads; ++h) {
      AttentionHead head;
      head.wq = init_weight(d, dh, rng);
      head.wk = init_weight(d, dh, rng);
      head.wv = init_weight(d, dh, rng);
      head.bq.assign(dh, 0.0);
      head.bv.assign(dh, 0.0);
      layer.heads.push_back(std::move(head));
    }
    layer.wo = init_weight(d, d, rng);
    layer.bo.assign(d, 0.0);
    layer.ff_w1 = init_weight(d, config.ff_hidden_dim, rng);
    layer.ff_b1.assign(config.ff_hidden_dim, 0.0);
    layer.ff_w2 = init_weight(config.ff_hidden_dim, d, rng);
    layer.ff_b2.assign(d, 0.0);
    if (config.use_layer_norm) {
      layer.ln1_gain.assign(d, 1.0);
      layer.ln1_bias.assign(d, 0.0);
      layer.ln2_gain.assign(d, 1.0);
      layer.ln2_bias.assign(d, 0.0);
    }
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

EncoderStack zeros_like(const EncoderStack& stack) {
  EncoderStack z = stack;
  for (Vector* arr : param_arrays(z)) std::fill(arr->begin(), arr->end(), 0.0);
  return z;
}

std::vector<Vector*> param_arrays(EncoderStack& stack) {
  std::vector<Vector*> out;
  out.push_back(&stack.input_w.data());
  out.push_back(&stack.input_b);
  out.push_back(&stack.spatial.w1.data());
  out.push_back(&stack.spatial.b1);
  out.push_back(&stack.spatial.w2.data());
  out.push_back(&stack.spatial.b2);
  for (EncoderLayer& layer : stack.layers) {
    for (AttentionHead& head : layer.heads) {
      out.push_back(&head.wq.data());
      out.push_back(&head.bq);
      out.push_back(&head.wk.data());
      out.push_back(&head.wv.data());
      out.push_back(&head.bv);
    }
    out.push_back(&layer.wo.data());
    out.push_back(&layer.bo);
    out.push_back(&layer.ff_w1.data());
    out.push_back(&layer.ff_b1);
    out.push_back(&layer.ff_w2.data());
    out.push_back(&layer.ff_b2);
    out.push_back(&layer.ln1_gain);
    out.push_back(&layer.ln1_bias);
    out.push_back(&layer.ln2_gain);
    out.push_back(&layer.ln2_bias);
  }
  return out;
}

std::vector<const Vector*> param_arrays(const EncoderStack& stack) {
  auto mut = param_arrays(const_cast<EncoderStack&>(stack));
  return {mut.begin(), mut.end()};
}

Vector flatten_params(const EncoderStack& stack) {
  Vector flat;
  for (const Vector* arr : param_arrays(stack)) flat.insert(flat.end(), arr->begin(), arr->end());
  return flat;
}

void unflatten_params(EncoderStack& stack, std::span<const double> flat) {
  std::size_t pos = 0;
  for (Vector* arr : param_arrays(stack)) {
    if (pos + arr->size() > flat.size()) throw DimensionError("unflatten_params: too few values");
    std::copy(flat.begin() + pos, flat.begin() + pos + arr->size(), arr->begin());
    pos += arr->size();
  }
  if (pos != flat.size()) throw DimensionError("unflatten_params: too many values");
}

void axpy_params(EncoderStack& dst, double alpha, const EncoderStack& src) {
  auto d = param_arrays(dst);
  auto s = param_arrays(src);
  if (d.size() != s.size()) throw DimensionError("axpy_params: structure mismatch");
  for (std::size_t a = 0; a < d.size(); ++a) {
    if (d[a]->size() != s[a]->size()) throw DimensionError("axpy_params: shape mismatch");
    for (std::size_t i = 0; i < d[a]->size(); ++i) (*d[a])[i] += alpha * (*s[a])[i];
  }
}

Matrix fuse_spatial(const NodeSet& nodes, const EncoderStack& stack, StackCache* cache) {
  validate_nodes(nodes, stack);
  Matrix projected = affine_forward(nodes.features, stack.input_w, stack.input_b);
  Matrix pre = affine_forward(nodes.boxes, stack.spatial.w1, stack.spatial.b1);
  Matrix hidden = pre;
  for (double& v : hidden.data()) v = v > 0.0 ? v : 0.0;
  Matrix spatial = affine_forward(hidden, stack.spatial.w2, stack.spatial.b2);
  Matrix fused = add(projected, spatial);
  if (cache) {
    cache->spatial_pre_act = std::move(pre);
    cache->spatial_hidden = std::move(hidden);
    cache->fused = fused;
  }
  return fused;
}

Matrix encoder_layer_forward(const Matrix& h_prev, const EncoderLayer& layer,
                             const EncoderConfig& config, EncoderLayerCache* cache) {
  if (h_prev.cols() != config.model_dim) {
    throw DimensionError("encoder_layer_forward: hidden dim mismatch");
  }
  if (cache) cache->h_in = h_prev;

  const Matrix* attn_in = &h_prev;
  Matrix normed1;
  if (config.use_layer_norm) {
    normed1 = layer_norm_forward(h_prev, layer.ln1_gain, layer.ln1_bias,
                                 cache ? &cache->ln1 : nullptr);
    attn_in = &normed1;
  }
  Matrix h_hat = add(h_prev, attention_forward(*attn_in, layer, config,
                                               cache ? &cache->attn : nullptr));

  const Matrix* ff_in = &h_hat;
  Matrix normed2;
  if (config.use_layer_norm) {
    normed2 = layer_norm_forward(h_hat, layer.ln2_gain, layer.ln2_bias,
                                 cache ? &cache->ln2 : nullptr);
    ff_in = &normed2;
  }
  Matrix out = add(h_hat, feed_forward(*ff_in, layer, cache ? &cache->ff : nullptr));
  if (cache) cache->h_hat = std::move(h_hat);
  return out;
}

Matrix stack_forward(const NodeSet& nodes, const EncoderStack& stack, StackCache* cache) {
  if (cache) {
    cache->layers.assign(stack.layers.size(), EncoderLayerCache{});
    cache->populated = true;
  }
  Matrix h = fuse_spatial(nodes, stack, cache);
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    h = encoder_layer_forward(h, stack.layers[l], stack.config,
                              cache ? &cache->layers[l] : nullptr);
  }
  return h;
}

StackGradients stack_backward(const NodeSet& nodes, const EncoderStack& stack,
                              const StackCache& cache, const Matrix& upstream) {
  if (!cache.populated || cache.layers.size() != stack.layers.size()) {
    throw UsageError("stack_backward: cache was not produced by stack_forward on this stack");
  }
  if (upstream.rows() != nodes.features.rows() || upstream.cols() != stack.config.model_dim) {
    throw DimensionError("stack_backward: upstream gradient shape mismatch");
  }

  StackGradients result;
  result.params = zeros_like(stack);

  Matrix dh = upstream;
  for (std::size_t l = stack.layers.size(); l-- > 0;) {
    const EncoderLayer& layer = stack.layers[l];
    const EncoderLayerCache& lc = cache.layers[l];
    EncoderLayer& lg = result.params.layers[l];

    // h_out = h_hat + FF(ff_in)
    Matrix dff_in = feed_forward_backward(dh, layer, lc.ff, lg);
    Matrix dh_hat = dh;
    if (stack.config.use_layer_norm) {
      dh_hat = add(dh_hat, layer_norm_backward(dff_in, lc.ln2, layer.ln2_gain, lg.ln2_gain,
                                               lg.ln2_bias));
    } else {
      dh_hat = add(dh_hat, dff_in);
    }

    // h_hat = h_in + Attention(attn_in)
    Matrix dattn_in = attention_backward(dh_hat, layer, stack.config, lc.attn, lg);
    if (stack.config.use_layer_norm) {
      dh = add(dh_hat, layer_norm_backward(dattn_in, lc.ln1, layer.ln1_gain, lg.ln1_gain,
                                           lg.ln1_bias));
    } else {
      dh = add(dh_hat, dattn_in);
    }
  }

  // Fusion: projected features plus the spatial path; boxes carry no gradient.
  AffineGrads proj = affine_backward(nodes.features, stack.input_w, dh);
  result.params.input_w = proj.dw;
  result.params.input_b = proj.db;
  result.features = proj.dx;

  AffineGrads sp2 = affine_backward(cache.spatial_hidden, stack.spatial.w2, dh);
  result.params.spatial.w2 = sp2.dw;
  result.params.spatial.b2 = sp2.db;
  Matrix dpre = sp2.dx;
  for (std::size_t i = 0; i < dpre.size(); ++i) {
    if (cache.spatial_pre_act.data()[i] <= 0.0) dpre.data()[i] = 0.0;
  }
  AffineGrads sp1 = affine_backward(nodes.boxes, stack.spatial.w1, dpre);
  result.params.spatial.w1 = sp1.dw;
  result.params.spatial.b1 = sp1.db;
  return result;
}

}  // namespace corrbalance
