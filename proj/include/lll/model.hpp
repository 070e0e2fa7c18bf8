#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "lll/numerics.hpp"

namespace lll {

enum class Activation { identity, relu };
enum class HeadKind { linear, cosine };

std::string_view to_string(HeadKind kind);
HeadKind head_kind_from_string(std::string_view name);

/// y = act(x W + b), W stored in_dim x out_dim.
struct DenseLayer {
  Mat weight;
  Vec bias;
  Activation activation = Activation::relu;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

/// Main-branch parameters: encoder, projection head, classifier (D x C).
struct ModelParams {
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> projection;
  Mat classifier;
  /// Bumped by every optimizer step; forward caches record it.
  std::uint64_t generation = 0;

  std::size_t input_dim() const;
  std::size_t feature_dim() const;
  std::size_t embedding_dim() const;
  std::size_t num_classes() const { return classifier.cols(); }
};

struct ModelShape {
  std::size_t input_dim = 16;
  std::vector<std::size_t> encoder_widths{64, 64};
  std::size_t embedding_dim = 32;
  std::size_t num_classes = 10;
};

/// He-normal weights for rectified layers, 1/fan_in variance otherwise; zero biases.
ModelParams init_model(const ModelShape& shape, std::mt19937_64& rng);

/// Zero-filled parameters with the same shapes as `like`.
ModelParams zeros_like(const ModelParams& like);

/// Every parameter tensor in a fixed order: encoder (W, b)..., projection (W, b)..., classifier.
std::vector<std::span<double>> parameter_tensors(ModelParams& params);
std::vector<std::span<const double>> parameter_tensors(const ModelParams& params);

void check_same_shapes(const ModelParams& a, const ModelParams& b);
void check_layer_chain(const ModelParams& params);

struct LayerCache {
  Mat input;
  Mat preactivation;
};

struct ForwardCache {
  std::uint64_t generation = 0;
  std::vector<LayerCache> encoder;
  std::vector<LayerCache> projection;
  Mat projected;  // projection output before normalization
};

struct ForwardOutput {
  Mat features;    // x, B x D
  Mat embeddings;  // z, B x E, unit rows
  Mat scores;      // x Theta (linear) or cos(x, theta_c) / gamma (cosine), B x C
  ForwardCache cache;
};

Mat dense_forward(const DenseLayer& layer, const Mat& input, Mat* preactivation = nullptr);

/// Runs the encoder stack only (no cache).
Mat encode(std::span<const DenseLayer> encoder, const Mat& batch);
/// Encoder + projection + row normalization; used for the momentum branch.
Mat embed(std::span<const DenseLayer> encoder, std::span<const DenseLayer> projection,
          const Mat& batch);

/// Classifier output used for prediction and for the scores field of forward().
Mat classifier_scores(const Mat& features, const Mat& classifier, HeadKind head, double gamma_t);

ForwardOutput forward(const ModelParams& params, const Mat& batch, HeadKind head, double gamma_t);

/// Chain rule from loss gradients on (x, Theta, z) to every main-branch parameter.
/// Throws Error("stale forward cache") when the cache does not belong to `params`.
ModelParams backward(const ModelParams& params, const Mat& grad_features, const Mat& grad_theta,
                     const Mat& grad_embeddings, const ForwardCache& cache);

}  // namespace lll
