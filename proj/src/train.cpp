// SPDX-License-Identifier: Apache-2.0
#include "csed/train.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "csed/errors.hpp"

namespace csed {

std::string to_string(LossMask m) {
  return m == LossMask::valid_frames ? "valid-frames" : "all-frames";
}

LossMask loss_mask_from_string(const std::string& s) {
  if (s == "valid-frames") return LossMask::valid_frames;
  if (s == "all-frames") return LossMask::all_frames;
  throw ConfigError("unknown loss mask policy '" + s + "' (valid-frames|all-frames)");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning rate must be a finite value >= 0");
  }
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
}

nlohmann::json TrainConfig::to_json(const std::vector<std::string>& classes) const {
  nlohmann::json j = {{"learning_rate", learning_rate}, {"batch_size", batch_size},
                      {"epochs", epochs},               {"seed", seed},
                      {"head", to_string(head)},        {"extractor", extractor},
                      {"head_hidden", head_hidden},     {"loss_mask", to_string(loss_mask)}};
  if (order.size()) j["order"] = order.to_json(classes);
  return j;
}

std::string TrainingHistory::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_frame_f1\n";
  for (const auto& e : epochs) {
    out += fmt::format("{},{:.17g},{:.17g},{:.17g}\n", e.epoch, e.train_loss, e.val_loss,
                       e.val_frame_f1);
  }
  return out;
}

namespace {

std::size_t masked_cells(const Batch& b) {
  return static_cast<std::size_t>(
      std::accumulate(b.loss_mask.data().begin(), b.loss_mask.data().end(), 0.0));
}

std::vector<Batch> make_batches(const std::vector<Chunk>& chunks, const std::vector<std::size_t>& order,
                                std::size_t batch_size, LossMask policy) {
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<const Chunk*> members;
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
      members.push_back(&chunks[order[i]]);
    }
    Batch b = make_batch(members);
    if (policy == LossMask::all_frames) b.loss_mask.fill(1.0);
    out.push_back(std::move(b));
  }
  return out;
}

double f1_of(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  const auto den = 2 * tp + fp + fn;
  return den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
}

void check_vocabulary(const Model& model, const Dataset& dataset) {
  if (model.spec().classes != dataset.classes) {
    throw ConfigError(fmt::format("model has {} classes, dataset has {}; vocabularies differ",
                                  model.spec().num_classes(), dataset.num_classes()));
  }
  if (model.normalizer().mean.size() != dataset.feature_bins()) {
    throw ConfigError(fmt::format("model expects {} feature bins, dataset has {}",
                                  model.normalizer().mean.size(), dataset.feature_bins()));
  }
}

double frame_macro_f1(const Model& model, const std::vector<const Clip*>& clips,
                      const ThresholdVector& thresholds) {
  ConfusionCounts total(model.spec().num_classes());
  for (const Clip* c : clips) total += frame_counts(model.predict(*c, thresholds).activities, c->labels);
  return f1_from_counts(total).macro_f1;
}

}  // namespace

double batch_loss(Model& model, const Batch& batch, nn::Mode mode) {
  Tape tape;
  const auto vars = model.params().bind(tape);
  Var z = model.forward(tape, vars, batch, mode);
  return ag::bce(z, batch.labels, &batch.loss_mask).value()[0];
}

TrainResult train_model(const Dataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  dataset.validate();
  if (dataset.split(Split::train).empty()) throw ArgumentError("train_model: empty train split");
  const auto val_clips = dataset.split(Split::val);
  if (val_clips.empty()) throw ArgumentError("train_model: empty validation split");

  ModelSpec spec;
  spec.extractor = preset_by_name(cfg.extractor);
  if (spec.extractor.bins != dataset.feature_bins()) {
    throw ConfigError(fmt::format("extractor '{}' expects {} feature bins, dataset has {}",
                                  cfg.extractor, spec.extractor.bins, dataset.feature_bins()));
  }
  spec.head = cfg.head;
  spec.head_hidden = cfg.head_hidden;
  spec.classes = dataset.classes;
  spec.order = cfg.order.size() ? cfg.order : ClassOrder::identity(dataset.num_classes());

  Rng rng(cfg.seed);
  Standardizer norm = Standardizer::fit(dataset, Split::train);
  Model model(spec, norm, rng);

  const auto train_chunks = prepare_chunks(dataset, Split::train, norm, spec.extractor.frames);
  const auto val_chunks = prepare_chunks(dataset, Split::val, norm, spec.extractor.frames);
  std::vector<std::size_t> val_order(val_chunks.size());
  std::iota(val_order.begin(), val_order.end(), 0);
  const auto val_batches = make_batches(val_chunks, val_order, cfg.batch_size, cfg.loss_mask);

  const AdamConfig adam{.lr = cfg.learning_rate};
  const ThresholdVector half = ThresholdVector::uniform(dataset.num_classes(), 0.5);
  std::vector<std::size_t> order(train_chunks.size());
  std::iota(order.begin(), order.end(), 0);

  TrainingHistory history;
  Model best = model;
  double best_f1 = -1.0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    const auto batches = make_batches(train_chunks, order, cfg.batch_size, cfg.loss_mask);
    double loss_sum = 0.0;
    std::size_t cells = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& batch = batches[bi];
      Tape tape;
      const auto vars = model.params().bind(tape);
      Var z = model.forward(tape, vars, batch, nn::Mode::train);
      Var loss = ag::bce(z, batch.labels, &batch.loss_mask);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw DivergenceError(fmt::format("non-finite training loss at epoch {}, batch {}", epoch,
                                          bi + 1));
      }
      model.params().adam_step(tape.backward(loss), adam);
      const std::size_t n = masked_cells(batch);
      loss_sum += value * static_cast<double>(n);
      cells += n;
    }

    double val_sum = 0.0;
    std::size_t val_cells = 0;
    for (const Batch& b : val_batches) {
      const std::size_t n = masked_cells(b);
      val_sum += batch_loss(model, b, nn::Mode::infer) * static_cast<double>(n);
      val_cells += n;
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(cells),
                    val_sum / static_cast<double>(val_cells),
                    frame_macro_f1(model, val_clips, half)};
    if (!std::isfinite(rec.val_loss)) {
      throw DivergenceError(fmt::format("non-finite validation loss at epoch {}", epoch));
    }
    if (rec.val_frame_f1 > best_f1) {
      best_f1 = rec.val_frame_f1;
      best = model;
      history.best_epoch = epoch;
    }
    history.epochs.push_back(rec);
  }

  // Optimizer moments are not part of the artifact.
  ParamStore weights;
  for (const auto& [name, t] : best.params().params()) weights.add(name, t);
  Model selected(best.spec(), best.normalizer(), std::move(weights), best.buffers());
  Checkpoint ckpt{std::move(selected), std::nullopt, {}, static_cast<int>(history.best_epoch),
                  cfg.to_json(dataset.classes)};
  return {std::move(ckpt), std::move(history)};
}

std::vector<double> threshold_grid(double step) {
  if (!(step > 0.0 && step <= 0.5)) throw ArgumentError("threshold grid step must lie in (0, 0.5]");
  std::vector<double> grid;
  for (std::size_t k = 1; static_cast<double>(k) * step < 1.0 - 1e-12; ++k) {
    grid.push_back(static_cast<double>(k) * step);
  }
  return grid;
}

double best_threshold(const std::vector<ScoreMatrix>& scores,
                      const std::vector<const ActivityMatrix*>& refs, std::size_t cls,
                      const std::vector<double>& grid) {
  if (scores.size() != refs.size()) throw DimensionError("best_threshold: score/reference count mismatch");
  if (grid.empty()) throw ArgumentError("best_threshold: empty grid");
  double best_eps = grid.front();
  double best_f1 = -1.0;
  for (double eps : grid) {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      for (std::size_t t = 0; t < refs[i]->frames(); ++t) {
        const bool p = scores[i](t, cls) > eps;
        const bool r = (*refs[i])(t, cls);
        tp += p && r;
        fp += p && !r;
        fn += !p && r;
      }
    }
    const double f = f1_of(tp, fp, fn);
    if (f > best_f1) {
      best_f1 = f;
      best_eps = eps;
    }
  }
  return best_eps;
}

ThresholdVector calibrate_thresholds(const Model& model, const Dataset& dataset, double step,
                                     Split split) {
  const auto grid = threshold_grid(step);
  check_vocabulary(model, dataset);
  const auto clips = dataset.split(split);
  if (clips.empty()) throw ArgumentError("calibrate_thresholds: empty " + to_string(split) + " split");
  std::vector<const ActivityMatrix*> refs;
  for (const Clip* c : clips) refs.push_back(&c->labels);

  const std::size_t l = model.spec().num_classes();
  std::vector<std::vector<LatentSequence>> latents;
  for (const Clip* c : clips) latents.push_back(model.latents(*c));

  ThresholdVector thresholds = ThresholdVector::uniform(l, 0.5);
  auto score_all = [&] {
    std::vector<ScoreMatrix> scores;
    for (const auto& r : latents) scores.push_back(model.predict(r, thresholds).scores);
    return scores;
  };

  if (model.spec().head != HeadKind::chain) {
    const auto scores = score_all();
    for (std::size_t c = 0; c < l; ++c) thresholds.set(c, best_threshold(scores, refs, c, grid));
    return thresholds;
  }
  // The score at chain position i depends only on thresholds of positions < i.
  const ClassOrder& order = model.spec().order;
  for (std::size_t i = 0; i < l; ++i) {
    const auto scores = score_all();
    thresholds.set(order[i], best_threshold(scores, refs, order[i], grid));
  }
  return thresholds;
}

MetricsReport evaluate(const Model& model, const Dataset& dataset, Split split,
                       const ThresholdVector& thresholds, std::size_t frames_per_segment) {
  check_vocabulary(model, dataset);
  if (thresholds.size() != dataset.num_classes()) {
    throw ArgumentError(fmt::format("{} thresholds for {} classes", thresholds.size(),
                                    dataset.num_classes()));
  }
  if (frames_per_segment == 0) throw ArgumentError("frames_per_segment must be >= 1");
  const std::size_t l = dataset.num_classes();
  ConfusionCounts frames(l, MetricUnit::frame), segments(l, MetricUnit::segment);
  for (const Clip* c : dataset.split(split)) {
    const ActivityMatrix pred = model.predict(*c, thresholds).activities;
    frames += frame_counts(pred, c->labels);
    segments += segment_counts(pred, c->labels, frames_per_segment);
  }
  return MetricsReport::from_counts(dataset.classes, std::move(frames), std::move(segments),
                                    frames_per_segment);
}

}  // namespace csed
