#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lll/model.hpp"
#include "lll/numerics.hpp"

namespace lll {

inline constexpr double kDefaultMomentum = 0.999;

/// Fixed-capacity FIFO of labeled unit-norm keys, stored as a ring buffer.
class KeyQueue {
 public:
  explicit KeyQueue(std::size_t capacity, std::size_t key_dim = 0);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  /// 0 until the first key fixes it (unless given at construction).
  std::size_t key_dim() const { return key_dim_; }

  std::uint64_t total_pushed() const { return total_pushed_; }
  std::uint64_t total_evicted() const { return total_evicted_; }

  /// Pushes rows of `keys` in order; oldest entries are evicted once full.
  void enqueue(const Mat& keys, const std::vector<int>& labels);

  /// Contents oldest first.
  Mat keys() const;
  std::vector<int> labels() const;

 private:
  std::size_t capacity_;
  std::size_t key_dim_;
  Vec storage_;
  std::vector<int> label_storage_;
  std::size_t head_ = 0;  // index of the oldest entry
  std::size_t size_ = 0;
  std::uint64_t total_pushed_ = 0;
  std::uint64_t total_evicted_ = 0;
};

/// Immutable per-step view: current-batch momentum keys followed by the queue snapshot.
/// Element k < batch_count() is the momentum key of batch instance k.
class KeyBank {
 public:
  KeyBank() = default;
  KeyBank(Mat batch_keys, std::vector<int> batch_labels, const KeyQueue& queue);
  KeyBank(Mat batch_keys, std::vector<int> batch_labels, Mat queue_keys, std::vector<int> queue_labels);

  std::size_t size() const { return keys_.rows(); }
  bool empty() const { return keys_.rows() == 0; }
  std::size_t batch_count() const { return batch_count_; }
  std::size_t key_dim() const { return keys_.cols(); }

  const Mat& keys() const { return keys_; }
  const std::vector<int>& labels() const { return labels_; }

 private:
  Mat keys_;
  std::vector<int> labels_;
  std::size_t batch_count_ = 0;
};

struct IndexSets {
  std::vector<std::size_t> positives;  // P_i^-
  std::vector<std::size_t> all;        // A^-
};

/// A^- is every bank element (the query comes from the main branch and is never a
/// bank element; the instance's own momentum key stays in). P_i^- keeps the elements
/// of A^- whose label equals `instance_label`.
IndexSets positive_and_all_sets(const KeyBank& bank, std::size_t instance_index, int instance_label);

/// Shadow encoder + projection updated by exponential moving average.
struct MomentumParams {
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> projection;
  double momentum = kDefaultMomentum;

  static MomentumParams copy_of(const ModelParams& main, double momentum = kDefaultMomentum);
};

/// shadow <- m * shadow + (1 - m) * main, for every encoder and projection entry.
void ema_update(const ModelParams& main, MomentumParams& shadow);

}  // namespace lll
