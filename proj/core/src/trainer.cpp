#include "dicegrad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "dicegrad/error.hpp"
#include "dicegrad/tensor_io.hpp"

namespace dicegrad {
namespace {

double dot(std::span<const double> w, std::span<const double> f) {
  double acc = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) acc += w[k] * f[k];
  return acc;
}

void check_batch(const LinearPixelModel& model, std::span<const PixelFeatures> batch) {
  if (batch.empty()) throw Error(ErrorCode::DimMismatch, "empty feature batch");
  if (model.features != kFeatureDim || model.weights.size() != model.classes * model.features) {
    throw Error(ErrorCode::DimMismatch, "weights do not match the feature dimension");
  }
  if (model.head == Head::Sigmoid && model.classes != 1) {
    throw Error(ErrorCode::DimMismatch, "sigmoid head has exactly one class");
  }
  if (model.head == Head::Softmax && model.classes < 2) {
    throw Error(ErrorCode::DimMismatch, "softmax head needs at least two classes");
  }
  for (const auto& f : batch) {
    if (f.count != batch.front().count || f.data.size() != f.count * kFeatureDim) {
      throw Error(ErrorCode::DimMismatch, "feature blocks differ in size");
    }
  }
}

}  // namespace

std::string_view to_string(Head head) { return head == Head::Sigmoid ? "sigmoid" : "softmax"; }

PixelFeatures featurize(const Image& image) {
  const std::size_t n = image.size;
  PixelFeatures out{n * n, std::vector<double>(n * n * kFeatureDim)};
  const auto clamp_index = [n](std::ptrdiff_t v) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      double window[9];
      std::size_t k = 0;
      for (std::ptrdiff_t dr = -1; dr <= 1; ++dr) {
        for (std::ptrdiff_t dc = -1; dc <= 1; ++dc) {
          window[k++] = image.at(clamp_index(static_cast<std::ptrdiff_t>(r) + dr),
                                 clamp_index(static_cast<std::ptrdiff_t>(c) + dc));
        }
      }
      const double mean = std::accumulate(std::begin(window), std::end(window), 0.0) / 9.0;
      double var = 0.0;
      for (const double v : window) var += (v - mean) * (v - mean);
      double* f = &out.data[(r * n + c) * kFeatureDim];
      f[0] = 1.0;
      f[1] = image.at(r, c);
      f[2] = mean;
      f[3] = std::sqrt(var / 9.0);
    }
  }
  return out;
}

LinearPixelModel LinearPixelModel::zeros(Head head, std::size_t classes) {
  return {head, classes, kFeatureDim, std::vector<double>(classes * kFeatureDim, 0.0)};
}

BatchTensor model_forward(const LinearPixelModel& model, std::span<const PixelFeatures> batch) {
  check_batch(model, batch);
  const Shape shape{batch.size(), model.classes, batch.front().count};
  std::vector<double> out(shape.size());
  std::vector<double> logits(model.classes);
  const std::span<const double> w(model.weights);
  for (std::size_t b = 0; b < shape.batch; ++b) {
    for (std::size_t i = 0; i < shape.voxels; ++i) {
      const auto f = batch[b].pixel(i);
      if (model.head == Head::Sigmoid) {
        out[shape.index(b, 0, i)] = 1.0 / (1.0 + std::exp(-dot(w, f)));
        continue;
      }
      for (std::size_t c = 0; c < model.classes; ++c) logits[c] = dot(w.subspan(c * model.features), f);
      const double peak = *std::max_element(logits.begin(), logits.end());
      double total = 0.0;
      for (auto& l : logits) total += (l = std::exp(l - peak));
      for (std::size_t c = 0; c < model.classes; ++c) out[shape.index(b, c, i)] = logits[c] / total;
    }
  }
  return BatchTensor(shape, std::move(out));
}

std::vector<double> model_backward(const LinearPixelModel& model, std::span<const PixelFeatures> batch,
                                   const BatchTensor& loss_grad) {
  const BatchTensor pred = model_forward(model, batch);
  if (loss_grad.shape() != pred.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "loss gradient does not match the predictions");
  }
  const Shape& shape = pred.shape();
  const std::size_t F = model.features;
  std::vector<double> grad(model.weights.size(), 0.0);
  for (std::size_t b = 0; b < shape.batch; ++b) {
    for (std::size_t i = 0; i < shape.voxels; ++i) {
      const auto f = batch[b].pixel(i);
      if (model.head == Head::Sigmoid) {
        const double p = pred.at(b, 0, i);
        const double scale = loss_grad.at(b, 0, i) * p * (1.0 - p);
        for (std::size_t k = 0; k < F; ++k) grad[k] += scale * f[k];
        continue;
      }
      // d pred_c / d logit_c' = pred_c (delta - pred_c'), contracted with the loss gradient.
      double weighted = 0.0;
      for (std::size_t c = 0; c < shape.classes; ++c) weighted += loss_grad.at(b, c, i) * pred.at(b, c, i);
      for (std::size_t c = 0; c < shape.classes; ++c) {
        const double scale = pred.at(b, c, i) * (loss_grad.at(b, c, i) - weighted);
        for (std::size_t k = 0; k < F; ++k) grad[c * F + k] += scale * f[k];
      }
    }
  }
  return grad;
}

DiceLossConfig effective_loss(const TrainConfig& cfg, Task task) {
  DiceLossConfig loss = cfg.loss;
  if (task == Task::Multiclass) {
    loss.background_class = 0;
    if (!cfg.include_background_in_loss) loss.ignored_class = 0;
  }
  return loss;
}

TrainResult train(const Dataset& dataset, const TrainConfig& cfg, std::span<const std::size_t> indices) {
  if (dataset.samples.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  if (cfg.batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch size must be >= 1");
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw Error(ErrorCode::InvalidConfig, "learning rate must be a non-negative finite number");
  }
  std::vector<std::size_t> pool(indices.begin(), indices.end());
  if (pool.empty()) {
    pool.resize(dataset.samples.size());
    std::iota(pool.begin(), pool.end(), 0);
  }
  if (pool.size() < cfg.batch_size) throw Error(ErrorCode::InvalidConfig, "fewer samples than one batch");

  const DiceLossConfig loss_cfg = effective_loss(cfg, dataset.task);
  const std::size_t classes = dataset.classes();
  const Head head = classes == 1 ? Head::Sigmoid : Head::Softmax;

  std::vector<PixelFeatures> features(dataset.samples.size());
  for (const std::size_t k : pool) features.at(k) = featurize(dataset.samples[k].image);

  TrainResult result{LinearPixelModel::zeros(head, classes), {}};
  result.history.reserve(cfg.iterations);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::vector<PixelFeatures> batch_features(cfg.batch_size);
  std::vector<BatchTensor> batch_gt(cfg.batch_size);
  std::vector<std::vector<bool>> rows(cfg.batch_size);

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    if (cursor + cfg.batch_size > order.size()) {
      order = pool;
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const auto& sample = dataset.samples[order[cursor + b]];
      batch_features[b] = features[order[cursor + b]];
      batch_gt[b] = sample.gt;
      rows[b] = sample.availability;
    }
    cursor += cfg.batch_size;

    const BatchTensor gt = stack_batch(batch_gt);
    const AvailabilityMask mask = AvailabilityMask::from_rows(rows);
    const BatchTensor pred = model_forward(result.model, batch_features);
    const DiceEvaluation ev = dice_evaluate(gt, pred, loss_cfg, &mask);

    HistoryRow row{it, ev.loss.value, std::vector<double>(classes, 0.0), std::vector<double>(classes, 0.0)};
    const Shape& shape = gt.shape();
    for (std::size_t c = 0; c < classes; ++c) {
      double sum0 = 0.0, sum1 = 0.0;
      std::size_t n0 = 0, n1 = 0;
      for (std::size_t b = 0; b < shape.batch; ++b) {
        for (std::size_t i = 0; i < shape.voxels; ++i) {
          const double g = std::abs(ev.gradient.at(b, c, i));
          if (gt.at(b, c, i) != 0.0) {
            sum1 += g;
            ++n1;
          } else {
            sum0 += g;
            ++n0;
          }
        }
      }
      row.grad_y0[c] = n0 ? sum0 / static_cast<double>(n0) : 0.0;
      row.grad_y1[c] = n1 ? sum1 / static_cast<double>(n1) : 0.0;
    }
    result.history.push_back(std::move(row));

    const auto grad = model_backward(result.model, batch_features, ev.gradient);
    for (std::size_t k = 0; k < grad.size(); ++k) result.model.weights[k] -= cfg.learning_rate * grad[k];
  }
  return result;
}

BatchTensor predict(const LinearPixelModel& model, const Image& image) {
  const PixelFeatures f = featurize(image);
  return model_forward(model, std::span<const PixelFeatures>(&f, 1));
}

std::string encode_checkpoint(const LinearPixelModel& model) {
  std::ostringstream header;
  header << "dicegrad-model 1\nhead " << to_string(model.head) << "\nclasses " << model.classes << "\nfeatures "
         << model.features << "\nend\n";
  std::string out = header.str();
  for (const double w : model.weights) put_f64_le(out, w);
  return out;
}

LinearPixelModel decode_checkpoint(std::string_view bytes) {
  const auto end = bytes.find("end\n");
  if (end == std::string_view::npos) throw Error(ErrorCode::FormatError, "checkpoint header not terminated");
  std::istringstream header{std::string(bytes.substr(0, end))};
  std::string magic, key, head;
  int version = 0;
  LinearPixelModel model;
  header >> magic >> version;
  if (magic != "dicegrad-model" || version != 1) throw Error(ErrorCode::FormatError, "not a model checkpoint");
  while (header >> key) {
    if (key == "head") {
      header >> head;
      if (head == "sigmoid") model.head = Head::Sigmoid;
      else if (head == "softmax") model.head = Head::Softmax;
      else throw Error(ErrorCode::FormatError, "unknown head " + head);
    } else if (key == "classes") {
      header >> model.classes;
    } else if (key == "features") {
      header >> model.features;
    } else {
      throw Error(ErrorCode::FormatError, "unknown header key " + key);
    }
  }
  const std::size_t offset = end + 4;
  const std::size_t count = model.classes * model.features;
  if (bytes.size() != offset + 8 * count) throw Error(ErrorCode::FormatError, "weight payload size mismatch");
  model.weights.resize(count);
  for (std::size_t k = 0; k < count; ++k) model.weights[k] = get_f64_le(bytes, offset + 8 * k);
  return model;
}

std::string history_csv(const std::vector<HistoryRow>& history, std::size_t classes) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,loss";
  for (std::size_t c = 0; c < classes; ++c) os << ",grad_y0_c" << c << ",grad_y1_c" << c;
  os << '\n';
  for (const auto& row : history) {
    os << row.iteration << ',' << row.loss;
    for (std::size_t c = 0; c < classes; ++c) os << ',' << row.grad_y0[c] << ',' << row.grad_y1[c];
    os << '\n';
  }
  return os.str();
}

}  // namespace dicegrad
