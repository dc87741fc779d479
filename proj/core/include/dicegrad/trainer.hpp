#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dicegrad/dice_loss.hpp"
#include "dicegrad/synth.hpp"
#include "dicegrad/tensor.hpp"

namespace dicegrad {

inline constexpr std::size_t kFeatureDim = 4;

// Per pixel: bias, intensity, 3x3 mean, 3x3 standard deviation (edge-replicated).
struct PixelFeatures {
  std::size_t count = 0;
  std::vector<double> data;  // count x kFeatureDim

  std::span<const double> pixel(std::size_t i) const {
    return std::span<const double>(data).subspan(i * kFeatureDim, kFeatureDim);
  }
};

PixelFeatures featurize(const Image& image);

enum class Head { Sigmoid, Softmax };

std::string_view to_string(Head head);

struct LinearPixelModel {
  Head head = Head::Sigmoid;
  std::size_t classes = 1;
  std::size_t features = kFeatureDim;
  std::vector<double> weights;  // classes x features, row per class

  static LinearPixelModel zeros(Head head, std::size_t classes);
  double weight(std::size_t c, std::size_t f) const { return weights[c * features + f]; }
  bool operator==(const LinearPixelModel&) const = default;
};

// One batch element per feature block; returns (B, C, I).
BatchTensor model_forward(const LinearPixelModel& model, std::span<const PixelFeatures> batch);

// dDL/dtheta, laid out like model.weights, for the given dDL/dpred.
std::vector<double> model_backward(const LinearPixelModel& model, std::span<const PixelFeatures> batch,
                                   const BatchTensor& loss_grad);

struct TrainConfig {
  DiceLossConfig loss;
  std::size_t batch_size = 1;
  double learning_rate = 1.0;
  std::size_t iterations = 500;
  std::uint64_t seed = 0;
  bool include_background_in_loss = false;
};

struct HistoryRow {
  std::size_t iteration = 0;
  double loss = 0.0;
  // Mean |dDL/dpred| per class over voxels labeled 0 and labeled 1.
  std::vector<double> grad_y0;
  std::vector<double> grad_y1;
};

struct TrainResult {
  LinearPixelModel model;
  std::vector<HistoryRow> history;
};

// Loss configuration the trainer actually applies for a task: background
// handling for multiclass heads is filled in here.
DiceLossConfig effective_loss(const TrainConfig& cfg, Task task);

// Plain gradient descent over seeded shuffles of `indices` (all samples when empty).
// Incomplete trailing batches are skipped so every step sees exactly batch_size samples.
TrainResult train(const Dataset& dataset, const TrainConfig& cfg, std::span<const std::size_t> indices = {});

BatchTensor predict(const LinearPixelModel& model, const Image& image);

// Text header (head, classes, features) terminated by "end\n", then f64 LE weights.
std::string encode_checkpoint(const LinearPixelModel& model);
LinearPixelModel decode_checkpoint(std::string_view bytes);

std::string history_csv(const std::vector<HistoryRow>& history, std::size_t classes);

}  // namespace dicegrad
