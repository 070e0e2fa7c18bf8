#include "lll/contrastive_bank.hpp"

#include <algorithm>

namespace lll {

KeyQueue::KeyQueue(std::size_t capacity, std::size_t key_dim)
    : capacity_(capacity), key_dim_(key_dim) {
  if (key_dim_ > 0) storage_.assign(capacity_ * key_dim_, 0.0);
  label_storage_.assign(capacity_, 0);
}

void KeyQueue::enqueue(const Mat& keys, const std::vector<int>& labels) {
  if (keys.rows() != labels.size()) {
    throw Error("enqueue: " + std::to_string(keys.rows()) + " keys but " +
                std::to_string(labels.size()) + " labels");
  }
  if (keys.rows() == 0) return;
  for (int y : labels) {
    if (y < 0) throw Error("enqueue: negative label");
  }
  if (key_dim_ == 0) {
    key_dim_ = keys.cols();
    storage_.assign(capacity_ * key_dim_, 0.0);
  } else if (keys.cols() != key_dim_) {
    throw Error("enqueue: key dimension " + std::to_string(keys.cols()) +
                " does not match queue dimension " + std::to_string(key_dim_));
  }
  for (std::size_t r = 0; r < keys.rows(); ++r) {
    ++total_pushed_;
    if (capacity_ == 0) {
      ++total_evicted_;
      continue;
    }
    std::size_t slot;
    if (size_ < capacity_) {
      slot = (head_ + size_) % capacity_;
      ++size_;
    } else {
      slot = head_;
      head_ = (head_ + 1) % capacity_;
      ++total_evicted_;
    }
    auto src = keys.row(r);
    std::copy(src.begin(), src.end(), storage_.begin() + static_cast<std::ptrdiff_t>(slot * key_dim_));
    label_storage_[slot] = labels[r];
  }
}

Mat KeyQueue::keys() const {
  Mat out(size_, key_dim_);
  for (std::size_t i = 0; i < size_; ++i) {
    const std::size_t slot = (head_ + i) % capacity_;
    std::copy_n(storage_.begin() + static_cast<std::ptrdiff_t>(slot * key_dim_), key_dim_,
                out.row(i).begin());
  }
  return out;
}

std::vector<int> KeyQueue::labels() const {
  std::vector<int> out(size_);
  for (std::size_t i = 0; i < size_; ++i) out[i] = label_storage_[(head_ + i) % capacity_];
  return out;
}

KeyBank::KeyBank(Mat batch_keys, std::vector<int> batch_labels, const KeyQueue& queue)
    : KeyBank(std::move(batch_keys), std::move(batch_labels), queue.keys(), queue.labels()) {}

KeyBank::KeyBank(Mat batch_keys, std::vector<int> batch_labels, Mat queue_keys,
                 std::vector<int> queue_labels) {
  if (batch_keys.rows() != batch_labels.size() || queue_keys.rows() != queue_labels.size()) {
    throw Error("KeyBank: key and label counts differ");
  }
  if (!batch_keys.empty() && !queue_keys.empty() && batch_keys.cols() != queue_keys.cols()) {
    throw Error("KeyBank: batch keys are " + shape_str(batch_keys) + " but queue keys are " +
                shape_str(queue_keys));
  }
  batch_count_ = batch_keys.rows();
  keys_ = std::move(batch_keys);
  for (std::size_t r = 0; r < queue_keys.rows(); ++r) keys_.append_row(queue_keys.row(r));
  labels_ = std::move(batch_labels);
  labels_.insert(labels_.end(), queue_labels.begin(), queue_labels.end());
}

IndexSets positive_and_all_sets(const KeyBank& bank, std::size_t /*instance_index*/, int instance_label) {
  IndexSets sets;
  sets.all.resize(bank.size());
  for (std::size_t k = 0; k < bank.size(); ++k) {
    sets.all[k] = k;
    if (bank.labels()[k] == instance_label) sets.positives.push_back(k);
  }
  return sets;
}

MomentumParams MomentumParams::copy_of(const ModelParams& main, double momentum) {
  if (momentum < 0.0 || momentum > 1.0) throw Error("momentum coefficient must lie in [0, 1]");
  return MomentumParams{main.encoder, main.projection, momentum};
}

namespace {

void ema_stack(const std::vector<DenseLayer>& main, std::vector<DenseLayer>& shadow, double m) {
  if (main.size() != shadow.size()) throw Error("ema_update: layer count mismatch");
  for (std::size_t l = 0; l < main.size(); ++l) {
    if (!main[l].weight.same_shape(shadow[l].weight) || main[l].bias.size() != shadow[l].bias.size()) {
      throw Error("ema_update: shape mismatch in layer " + std::to_string(l));
    }
    auto mw = main[l].weight.values();
    auto sw = shadow[l].weight.values();
    for (std::size_t i = 0; i < sw.size(); ++i) sw[i] = m * sw[i] + (1.0 - m) * mw[i];
    for (std::size_t i = 0; i < shadow[l].bias.size(); ++i) {
      shadow[l].bias[i] = m * shadow[l].bias[i] + (1.0 - m) * main[l].bias[i];
    }
  }
}

}  // namespace

void ema_update(const ModelParams& main, MomentumParams& shadow) {
  ema_stack(main.encoder, shadow.encoder, shadow.momentum);
  ema_stack(main.projection, shadow.projection, shadow.momentum);
}

}  // namespace lll
