// Copyright 2026 The TinyForge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinyforge/ir.hpp"

namespace tinyforge::trainer {

enum class DataKind { kAudio, kTimeseries };

std::string to_string(DataKind k);
DataKind data_kind_from_string(const std::string& s);

/// Labeled feature vectors, each the row-major flattening of the model input.
struct LabeledFeatures {
  std::vector<std::vector<float>> x;
  std::vector<int> y;
  std::size_t size() const { return x.size(); }
};

/// Architecture descriptors:
///   "Nx conv1d (A to B)"          N conv1d(k=3)+relu blocks, filters going
///                                 geometrically from A to B, each followed
///                                 by maxpool(2) while the length allows;
///   "Nx conv1d (A to B, no pool)" the same without pooling;
///   "mlp (H1, H2, ...)"           dense+relu hidden layers.
/// All end in flatten, dense(num_classes), softmax.
struct Architecture {
  enum class Kind { kConvStack, kMlp } kind = Kind::kMlp;
  std::vector<int> widths;
  bool pool = true;
};

Architecture parse_descriptor(const std::string& descriptor);
std::string default_descriptor(DataKind kind);

/// Builds an untrained float graph: Glorot-uniform weights from `seed`, zero
/// hidden biases, classifier bias log(1/num_classes).
ir::ModelGraph init_preset(DataKind kind, int rows, int cols, int num_classes,
                           std::uint64_t seed, const std::string& descriptor = "");

/// Double-precision trainable view of a chain-shaped float graph ending in
/// softmax. Inputs are standardized per channel (last axis) before the first
/// layer; export() folds that standardization into the first layer.
class Network {
 public:
  explicit Network(const ir::ModelGraph& g);

  struct Layer {
    ir::OpKind kind;
    ir::OpAttrs attrs;
    bool relu = false;
    std::vector<int> in_shape, out_shape;
    std::vector<double> w, b, gw, gb;
  };

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t input_size() const { return input_size_; }

  /// Per-channel input standardization; identity by default.
  void set_standardization(std::vector<double> mean, std::vector<double> inv_std);
  void fit_standardization(const LabeledFeatures& data);

  /// Class probabilities.
  std::vector<double> forward(std::span<const double> x) const;
  /// Cross-entropy of one sample; adds the gradients to gw/gb and returns
  /// the loss. When `input_grad` is given it receives dLoss/dx (with
  /// respect to the raw, unstandardized input).
  double accumulate_gradients(std::span<const double> x, int label,
                              std::vector<double>* input_grad = nullptr);
  void zero_gradients();
  void sgd_step(double learning_rate, double batch_size);

  double loss(std::span<const double> x, int label) const;
  int predict(std::span<const double> x) const;

  ir::ModelGraph export_graph() const;

 private:
  std::vector<std::vector<double>> forward_all(std::span<const double> x) const;

  ir::ModelGraph template_;
  std::vector<Layer> layers_;
  std::size_t input_size_ = 0;
  std::vector<int> input_shape_;
  std::vector<double> mean_, inv_std_;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  std::optional<double> learning_rate;  // found with lr_find when empty
  std::uint64_t seed = 1;
  double validation_fraction = 0.2;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  ir::ModelGraph model;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double learning_rate = 0.0;
};

/// Keeps the snapshot with the best metric; ties keep the earlier one.
template <typename Snapshot>
class BestCheckpoint {
 public:
  bool offer(int epoch, double metric, const Snapshot& snapshot) {
    if (has_ && !(metric > best_metric_)) return false;
    has_ = true;
    best_metric_ = metric;
    best_epoch_ = epoch;
    best_.emplace(snapshot);
    return true;
  }
  bool has_value() const { return has_; }
  int epoch() const { return best_epoch_; }
  double metric() const { return best_metric_; }
  const Snapshot& snapshot() const { return *best_; }

 private:
  bool has_ = false;
  double best_metric_ = 0.0;
  int best_epoch_ = -1;
  std::optional<Snapshot> best_;
};

/// Geometric candidate grid 10^-5 .. 10^0 in half-decade steps.
std::vector<double> lr_candidates();

struct LrFindResult {
  double learning_rate = 0.0;
  double initial_loss = 0.0;
  std::vector<std::pair<double, double>> sweep;  // (lr, loss after one mini-epoch)
};

/// `loss_after(lr)` trains a fresh copy for one mini-epoch at lr and returns
/// its loss. A candidate diverges when that loss is non-finite or more than
/// 4x `initial_loss`. Returns one decade below the smallest diverging
/// candidate, or the largest candidate when none diverges.
LrFindResult lr_find(double initial_loss, const std::function<double(double)>& loss_after);

/// lr_find for a graph: one mini-epoch is up to 10 mini-batches drawn with
/// the config seed; its loss is the larger of the peak batch loss and the
/// loss after the last step.
LrFindResult lr_find(const ir::ModelGraph& g, const LabeledFeatures& data, const TrainConfig& cfg);

/// Stratified split of a training set into (train, validation).
std::pair<LabeledFeatures, LabeledFeatures> split_validation(const LabeledFeatures& data,
                                                             double fraction, std::uint64_t seed);

/// Mini-batch SGD on cross-entropy; returns the epoch with the best
/// validation accuracy.
TrainResult train(const ir::ModelGraph& g, const LabeledFeatures& data, const TrainConfig& cfg);

struct EvalReport {
  std::vector<std::vector<int>> confusion;  // rows = true class
  double accuracy = 0.0;
  std::vector<double> per_class_f1;
};

EvalReport report_from_confusion(std::vector<std::vector<int>> confusion);
/// Runs any graph (f32 or i8) through the interpreter and scores argmax.
EvalReport evaluate(const ir::ModelGraph& g, const LabeledFeatures& data, int num_classes);

// K-means anomaly model.

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<double> wcss_history;  // after each assignment step
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding, at most 100 iterations or until
/// every centroid moves less than 1e-6. Empty clusters are re-seeded at the
/// point farthest from its centroid.
KMeansResult kmeans_fit(std::span<const std::vector<double>> points, int k, std::uint64_t seed);
/// Euclidean distance to the nearest centroid.
double kmeans_score(std::span<const double> x, const std::vector<std::vector<double>>& centroids);
ir::ModelGraph anomaly_graph(const std::vector<std::vector<double>>& centroids);

}  // namespace tinyforge::trainer
