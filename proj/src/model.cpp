#include "lll/model.hpp"

#include <algorithm>
#include <cmath>

namespace lll {

std::string_view to_string(HeadKind kind) {
  return kind == HeadKind::linear ? "linear" : "cosine";
}

HeadKind head_kind_from_string(std::string_view name) {
  if (name == "linear") return HeadKind::linear;
  if (name == "cosine") return HeadKind::cosine;
  throw Error("unknown head kind '" + std::string(name) + "' (expected linear or cosine)");
}

std::size_t ModelParams::input_dim() const {
  return encoder.empty() ? classifier.rows() : encoder.front().in_dim();
}

std::size_t ModelParams::feature_dim() const { return classifier.rows(); }

std::size_t ModelParams::embedding_dim() const {
  return projection.empty() ? feature_dim() : projection.back().out_dim();
}

namespace {

DenseLayer make_layer(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng) {
  DenseLayer layer{Mat(in, out), Vec(out, 0.0), act};
  const double var = (act == Activation::relu ? 2.0 : 1.0) / static_cast<double>(in);
  std::normal_distribution<double> dist(0.0, std::sqrt(var));
  for (double& w : layer.weight.values()) w = dist(rng);
  return layer;
}

void layer_backward(const DenseLayer& layer, const LayerCache& cache, Mat grad_out,
                    DenseLayer& grad_layer, Mat* grad_input) {
  if (layer.activation == Activation::relu) {
    auto pre = cache.preactivation.values();
    auto g = grad_out.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (pre[i] <= 0.0) g[i] = 0.0;
    }
  }
  grad_layer.weight = matmul_at_b(cache.input, grad_out);
  grad_layer.bias.assign(layer.out_dim(), 0.0);
  for (std::size_t r = 0; r < grad_out.rows(); ++r) {
    auto row = grad_out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) grad_layer.bias[c] += row[c];
  }
  if (grad_input != nullptr) *grad_input = matmul_a_bt(grad_out, layer.weight);
}

}  // namespace

ModelParams init_model(const ModelShape& shape, std::mt19937_64& rng) {
  if (shape.input_dim == 0 || shape.embedding_dim == 0 || shape.num_classes < 2) {
    throw Error("init_model: invalid model shape");
  }
  ModelParams params;
  std::size_t width = shape.input_dim;
  for (std::size_t w : shape.encoder_widths) {
    if (w == 0) throw Error("init_model: zero encoder width");
    params.encoder.push_back(make_layer(width, w, Activation::relu, rng));
    width = w;
  }
  params.projection.push_back(make_layer(width, width, Activation::relu, rng));
  params.projection.push_back(make_layer(width, shape.embedding_dim, Activation::identity, rng));
  params.classifier = Mat(width, shape.num_classes);
  std::normal_distribution<double> dist(0.0, 0.01);
  for (double& w : params.classifier.values()) w = dist(rng);
  return params;
}

ModelParams zeros_like(const ModelParams& like) {
  ModelParams z = like;
  for (auto t : parameter_tensors(z)) std::fill(t.begin(), t.end(), 0.0);
  z.generation = 0;
  return z;
}

std::vector<std::span<double>> parameter_tensors(ModelParams& params) {
  std::vector<std::span<double>> out;
  for (auto* stack : {&params.encoder, &params.projection}) {
    for (auto& layer : *stack) {
      out.emplace_back(layer.weight.values());
      out.emplace_back(layer.bias);
    }
  }
  out.emplace_back(params.classifier.values());
  return out;
}

std::vector<std::span<const double>> parameter_tensors(const ModelParams& params) {
  std::vector<std::span<const double>> out;
  for (auto* stack : {&params.encoder, &params.projection}) {
    for (const auto& layer : *stack) {
      out.emplace_back(layer.weight.values());
      out.emplace_back(layer.bias);
    }
  }
  out.emplace_back(params.classifier.values());
  return out;
}

void check_same_shapes(const ModelParams& a, const ModelParams& b) {
  auto same_stack = [](const std::vector<DenseLayer>& x, const std::vector<DenseLayer>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!x[i].weight.same_shape(y[i].weight) || x[i].bias.size() != y[i].bias.size()) {
        return false;
      }
    }
    return true;
  };
  if (!same_stack(a.encoder, b.encoder) || !same_stack(a.projection, b.projection) ||
      !a.classifier.same_shape(b.classifier)) {
    throw Error("parameter shape mismatch");
  }
}

void check_layer_chain(const ModelParams& params) {
  std::size_t width = params.input_dim();
  for (const auto& layer : params.encoder) {
    if (layer.in_dim() != width || layer.bias.size() != layer.out_dim()) {
      throw Error("encoder layers do not chain");
    }
    width = layer.out_dim();
  }
  if (params.classifier.rows() != width) throw Error("classifier rows do not match feature dim");
  for (const auto& layer : params.projection) {
    if (layer.in_dim() != width || layer.bias.size() != layer.out_dim()) {
      throw Error("projection layers do not chain");
    }
    width = layer.out_dim();
  }
}

Mat dense_forward(const DenseLayer& layer, const Mat& input, Mat* preactivation) {
  if (input.cols() != layer.in_dim()) {
    throw Error("dense layer expects " + std::to_string(layer.in_dim()) + " inputs, got " +
                shape_str(input));
  }
  Mat out = matmul(input, layer.weight);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
  }
  if (preactivation != nullptr) *preactivation = out;
  if (layer.activation == Activation::relu) {
    for (double& v : out.values()) v = std::max(v, 0.0);
  }
  return out;
}

Mat encode(std::span<const DenseLayer> encoder, const Mat& batch) {
  Mat h = batch;
  for (const auto& layer : encoder) h = dense_forward(layer, h);
  return h;
}

Mat embed(std::span<const DenseLayer> encoder, std::span<const DenseLayer> projection,
          const Mat& batch) {
  Mat h = encode(encoder, batch);
  for (const auto& layer : projection) h = dense_forward(layer, h);
  for (std::size_t r = 0; r < h.rows(); ++r) {
    const Vec z = l2_normalize(h.row(r));
    std::copy(z.begin(), z.end(), h.row(r).begin());
  }
  return h;
}

Mat classifier_scores(const Mat& features, const Mat& classifier, HeadKind head, double gamma_t) {
  if (features.cols() != classifier.rows()) {
    throw Error("classifier expects " + std::to_string(classifier.rows()) + " features, got " +
                shape_str(features));
  }
  if (head == HeadKind::linear) return matmul(features, classifier);
  if (!(gamma_t > 0.0)) throw Error("cosine head temperature must be positive");
  Vec col_norm(classifier.cols(), 0.0);
  for (std::size_t d = 0; d < classifier.rows(); ++d) {
    for (std::size_t c = 0; c < classifier.cols(); ++c) col_norm[c] += classifier(d, c) * classifier(d, c);
  }
  for (double& n : col_norm) n = std::max(std::sqrt(n), kNormEps);
  Mat scores = matmul(features, classifier);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const double xn = std::max(norm2(features.row(i)), kNormEps);
    for (std::size_t c = 0; c < scores.cols(); ++c) {
      scores(i, c) /= xn * col_norm[c] * gamma_t;
    }
  }
  return scores;
}

ForwardOutput forward(const ModelParams& params, const Mat& batch, HeadKind head, double gamma_t) {
  check_layer_chain(params);
  ForwardOutput out;
  out.cache.generation = params.generation;
  Mat h = batch;
  for (const auto& layer : params.encoder) {
    LayerCache lc{h, {}};
    h = dense_forward(layer, h, &lc.preactivation);
    out.cache.encoder.push_back(std::move(lc));
  }
  out.features = h;
  for (const auto& layer : params.projection) {
    LayerCache lc{h, {}};
    h = dense_forward(layer, h, &lc.preactivation);
    out.cache.projection.push_back(std::move(lc));
  }
  out.cache.projected = h;
  out.embeddings = h;
  for (std::size_t r = 0; r < h.rows(); ++r) {
    const Vec z = l2_normalize(h.row(r));
    std::copy(z.begin(), z.end(), out.embeddings.row(r).begin());
  }
  out.scores = classifier_scores(out.features, params.classifier, head, gamma_t);
  return out;
}

ModelParams backward(const ModelParams& params, const Mat& grad_features, const Mat& grad_theta,
                     const Mat& grad_embeddings, const ForwardCache& cache) {
  if (cache.generation != params.generation || cache.encoder.size() != params.encoder.size() ||
      cache.projection.size() != params.projection.size()) {
    throw Error("stale forward cache");
  }
  const std::size_t batch = cache.projected.rows();
  if (grad_features.rows() != batch || grad_embeddings.rows() != batch ||
      grad_features.cols() != params.feature_dim() ||
      grad_embeddings.cols() != cache.projected.cols() ||
      !grad_theta.same_shape(params.classifier)) {
    throw Error("backward: gradient shapes do not match the forward cache");
  }

  ModelParams grads = zeros_like(params);
  grads.classifier = grad_theta;

  Mat g(cache.projected.rows(), cache.projected.cols());
  for (std::size_t r = 0; r < batch; ++r) {
    const Vec gr = l2_normalize_backward(cache.projected.row(r), grad_embeddings.row(r));
    std::copy(gr.begin(), gr.end(), g.row(r).begin());
  }
  for (std::size_t l = params.projection.size(); l-- > 0;) {
    Mat gin;
    layer_backward(params.projection[l], cache.projection[l], std::move(g), grads.projection[l], &gin);
    g = std::move(gin);
  }
  auto gv = g.values();
  auto gf = grad_features.values();
  for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += gf[i];

  for (std::size_t l = params.encoder.size(); l-- > 0;) {
    Mat gin;
    layer_backward(params.encoder[l], cache.encoder[l], std::move(g), grads.encoder[l],
                   l > 0 ? &gin : nullptr);
    g = std::move(gin);
  }
  return grads;
}

}  // namespace lll
