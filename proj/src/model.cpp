// SPDX-License-Identifier: Apache-2.0
#include "csed/model.hpp"

#include "csed/errors.hpp"

namespace csed {

HeadConfig ModelSpec::head_config() const {
  return {head, extractor.latent_dim(), classes.size(),
          head_hidden ? head_hidden : extractor.latent_dim()};
}

void ModelSpec::validate() const {
  extractor.validate();
  validate_vocabulary(classes);
  if (order.size() != classes.size()) {
    throw ConfigError("model: chain order covers " + std::to_string(order.size()) +
                      " classes, vocabulary has " + std::to_string(classes.size()));
  }
}

nlohmann::json ModelSpec::to_json() const {
  return {{"extractor", extractor.to_json()},
          {"head", to_string(head)},
          {"head_hidden", head_config().hidden},
          {"classes", classes},
          {"order", order.to_json(classes)}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.extractor = FeatureExtractorConfig::from_json(j.at("extractor"));
  s.head = head_kind_from_string(j.at("head").get<std::string>());
  s.head_hidden = j.at("head_hidden").get<std::size_t>();
  s.classes = j.at("classes").get<std::vector<std::string>>();
  s.order = ClassOrder::from_json(j.at("order"), s.classes);
  s.validate();
  return s;
}

Batch make_batch(const std::vector<const Chunk*>& chunks) {
  if (chunks.empty()) throw ArgumentError("make_batch: no chunks");
  const std::size_t b = chunks.size();
  const std::size_t t = chunks[0]->features.dim(0), f = chunks[0]->features.dim(1);
  const std::size_t l = chunks[0]->labels.classes();
  Batch batch{Tensor({b, t, f}), Tensor({b * t, l}), Tensor({b, t}), Tensor({b * t, l})};
  for (std::size_t i = 0; i < b; ++i) {
    const Chunk& c = *chunks[i];
    expect_shape(c.features, {t, f}, "batch chunk");
    std::copy(c.features.data().begin(), c.features.data().end(),
              batch.features.data().begin() + i * t * f);
    for (std::size_t k = 0; k < c.valid; ++k) {
      batch.mask.at(i, k) = 1.0;
      for (std::size_t j = 0; j < l; ++j) {
        batch.labels.at(i * t + k, j) = c.labels(k, j);
        batch.loss_mask.at(i * t + k, j) = 1.0;
      }
    }
  }
  return batch;
}

Model::Model(ModelSpec spec, Standardizer normalizer, Rng& rng)
    : spec_(std::move(spec)), normalizer_(std::move(normalizer)) {
  spec_.validate();
  init_extractor(spec_.extractor, params_, buffers_, rng);
  init_head(spec_.head_config(), params_, rng);
}

Model::Model(ModelSpec spec, Standardizer normalizer, ParamStore params, ExtractorBuffers buffers)
    : spec_(std::move(spec)), normalizer_(std::move(normalizer)), params_(std::move(params)),
      buffers_(std::move(buffers)) {
  spec_.validate();
  if (buffers_.size() != spec_.extractor.blocks.size()) {
    throw ConfigError("model: " + std::to_string(buffers_.size()) + " batchnorm buffers for " +
                      std::to_string(spec_.extractor.blocks.size()) + " conv blocks");
  }
}

Var Model::forward(Tape& tape, const std::map<std::string, Var>& vars, const Batch& batch,
                   nn::Mode mode) {
  const std::size_t b = batch.features.dim(0), t = batch.features.dim(1);
  Var x = tape.constant(batch.features);
  Var r = extract(x, batch.mask, spec_.extractor, vars, buffers_, mode);
  const std::size_t d = spec_.extractor.latent_dim();
  switch (spec_.head) {
    case HeadKind::independent:
      return independent_forward(ag::reshape(r, {b * t, d}), vars);
    case HeadKind::gru: {
      Var z = gru_head_forward(r, &batch.mask, vars);
      return ag::reshape(z, {b * t, spec_.num_classes()});
    }
    case HeadKind::chain:
      return chain_forward_teacher(ag::reshape(r, {b * t, d}), batch.labels, spec_.order, vars);
  }
  throw UsageError("unknown head kind");
}

std::vector<LatentSequence> Model::latents(const Clip& clip) const {
  const Tensor normalized = normalizer_.apply(clip.features);
  Clip staged{clip.id, normalized, clip.labels, clip.split};
  ExtractorBuffers buffers = buffers_;
  std::vector<LatentSequence> out;
  for (const Chunk& c : chunk(staged, spec_.extractor.frames)) {
    Tensor valid({c.valid, c.features.dim(1)},
                 std::vector<double>(c.features.data().begin(),
                                     c.features.data().begin() + c.valid * c.features.dim(1)));
    out.push_back(extract(valid, spec_.extractor, params_, buffers, nn::Mode::infer));
  }
  return out;
}

Prediction Model::predict(const std::vector<LatentSequence>& latents,
                          const ThresholdVector& thresholds) const {
  const std::size_t l = spec_.num_classes();
  std::size_t frames = 0;
  for (const auto& r : latents) frames += r.dim(0);
  Tensor scores({frames, l});
  ActivityMatrix act(frames, l);
  std::size_t offset = 0;
  for (const auto& r : latents) {
    Prediction part;
    switch (spec_.head) {
      case HeadKind::independent: {
        ScoreMatrix z = independent_forward(r, params_);
        part = {z, binarize(z, thresholds)};
        break;
      }
      case HeadKind::gru: {
        ScoreMatrix z = gru_head_forward(r, params_);
        part = {z, binarize(z, thresholds)};
        break;
      }
      case HeadKind::chain: {
        ChainOutput o = chain_forward_inference(r, spec_.order, thresholds, params_);
        part = {std::move(o.scores), std::move(o.activities)};
        break;
      }
    }
    for (std::size_t t = 0; t < r.dim(0); ++t) {
      for (std::size_t c = 0; c < l; ++c) {
        scores.at(offset + t, c) = part.scores(t, c);
        act.set(offset + t, c, part.activities(t, c));
      }
    }
    offset += r.dim(0);
  }
  return {ScoreMatrix(std::move(scores)), std::move(act)};
}

Prediction Model::predict(const Clip& clip, const ThresholdVector& thresholds) const {
  return predict(latents(clip), thresholds);
}

std::vector<Chunk> prepare_chunks(const Dataset& dataset, Split split,
                                  const Standardizer& normalizer, std::size_t chunk_frames) {
  std::vector<Chunk> out;
  for (std::size_t i = 0; i < dataset.clips.size(); ++i) {
    const Clip& c = dataset.clips[i];
    if (c.split != split) continue;
    Clip staged{c.id, normalizer.apply(c.features), c.labels, c.split};
    for (Chunk& ch : chunk(staged, chunk_frames)) {
      ch.clip_index = i;
      out.push_back(std::move(ch));
    }
  }
  return out;
}

}  // namespace csed
