// SPDX-License-Identifier: Apache-2.0
#include "csed/featex.hpp"

#include "csed/errors.hpp"

namespace csed {
namespace {

std::string block_prefix(std::size_t i) { return "fx.block" + std::to_string(i) + "."; }

const Var& param(const std::map<std::string, Var>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw UsageError("missing extractor parameter '" + name + "'");
  return it->second;
}

}  // namespace

std::size_t FeatureExtractorConfig::collapsed_channels() const {
  return blocks.empty() ? 1 : blocks.back().channels;
}

void FeatureExtractorConfig::validate() const {
  if (frames == 0 || bins == 0) throw ConfigError("extractor '" + name + "': zero T or F");
  if (bigru_hidden == 0) throw ConfigError("extractor '" + name + "': zero BiGRU hidden size");
  std::size_t f = bins;
  for (const auto& b : blocks) {
    if (b.channels == 0 || b.pool_freq == 0) {
      throw ConfigError("extractor '" + name + "': zero channels or pool size");
    }
    if (f % b.pool_freq != 0) {
      throw ConfigError("extractor '" + name + "': frequency size " + std::to_string(f) +
                        " not divisible by pool " + std::to_string(b.pool_freq));
    }
    f /= b.pool_freq;
  }
  if (f != 1) {
    throw ConfigError("extractor '" + name + "': pooling leaves " + std::to_string(f) +
                      " frequency bins, expected 1");
  }
}

nlohmann::json FeatureExtractorConfig::to_json() const {
  nlohmann::json blocks_json = nlohmann::json::array();
  for (const auto& b : blocks) {
    blocks_json.push_back({{"channels", b.channels}, {"pool_freq", b.pool_freq}});
  }
  return {{"name", name},     {"frames", frames},           {"bins", bins},
          {"blocks", blocks_json}, {"bigru_hidden", bigru_hidden}};
}

FeatureExtractorConfig FeatureExtractorConfig::from_json(const nlohmann::json& j) {
  FeatureExtractorConfig cfg;
  cfg.name = j.value("name", std::string("custom"));
  cfg.frames = j.at("frames").get<std::size_t>();
  cfg.bins = j.at("bins").get<std::size_t>();
  for (const auto& b : j.at("blocks")) {
    cfg.blocks.push_back({b.at("channels").get<std::size_t>(), b.at("pool_freq").get<std::size_t>()});
  }
  cfg.bigru_hidden = j.at("bigru_hidden").get<std::size_t>();
  cfg.validate();
  return cfg;
}

ExtractorPresets default_presets() {
  ExtractorPresets p;
  p.paper_scale = {"paper", 512, 64, {{64, 4}, {64, 4}, {64, 4}}, 62};
  p.desk_scale = {"desk", 64, 16, {{8, 4}, {8, 4}}, 8};
  return p;
}

FeatureExtractorConfig preset_by_name(const std::string& name) {
  const ExtractorPresets p = default_presets();
  if (name == "paper") return p.paper_scale;
  if (name == "desk") return p.desk_scale;
  throw ConfigError("unknown extractor preset '" + name + "' (expected paper or desk)");
}

void init_extractor(const FeatureExtractorConfig& cfg, ParamStore& params,
                    ExtractorBuffers& buffers, Rng& rng) {
  cfg.validate();
  buffers.clear();
  std::size_t cin = 1;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const std::size_t cout = cfg.blocks[i].channels;
    const std::string p = block_prefix(i);
    params.add(p + "conv.kernel", init_uniform({3, 3, cin, cout}, 9 * cin, rng));
    params.add(p + "conv.bias", init_uniform({cout}, 9 * cin, rng));
    params.add(p + "bn.gamma", Tensor({cout}, 1.0));
    params.add(p + "bn.beta", Tensor({cout}, 0.0));
    buffers.push_back(nn::BatchNormState::fresh(cout));
    cin = cout;
  }
  const std::size_t h = cfg.bigru_hidden;
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string p = std::string("fx.bigru.") + dir + ".";
    params.add(p + "wi", init_uniform({3 * h, cin}, h, rng));
    params.add(p + "wh", init_uniform({3 * h, h}, h, rng));
    params.add(p + "b", init_uniform({3 * h}, h, rng));
  }
}

Var extract(Var x, const Tensor& mask, const FeatureExtractorConfig& cfg,
            const std::map<std::string, Var>& params, ExtractorBuffers& buffers,
            nn::Mode mode) {
  const Tensor& xv = x.value();
  expect_rank(xv, 3, "extractor input");
  const std::size_t batch = xv.dim(0), frames = xv.dim(1);
  if (xv.dim(2) != cfg.bins) {
    throw DimensionError("extractor: input has " + std::to_string(xv.dim(2)) +
                         " bins, config expects " + std::to_string(cfg.bins));
  }
  if (frames == 0) throw ArgumentError("extractor: empty sequence");
  expect_shape(mask, {batch, frames}, "extractor mask");
  if (buffers.size() != cfg.blocks.size()) throw UsageError("extractor: buffer count mismatch");

  Var h = ag::reshape(ag::mask_frames(x, mask), {batch, frames, cfg.bins, 1});
  std::size_t f = cfg.bins;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const std::string p = block_prefix(i);
    h = ag::conv2d(h, param(params, p + "conv.kernel"), param(params, p + "conv.bias"));
    std::vector<double> weights(batch * frames * f);
    for (std::size_t bt = 0; bt < batch * frames; ++bt)
      for (std::size_t k = 0; k < f; ++k) weights[bt * f + k] = mask[bt];
    h = ag::batchnorm(h, param(params, p + "bn.gamma"), param(params, p + "bn.beta"),
                      buffers[i], mode, weights);
    h = ag::relu(h);
    h = ag::maxpool2d(h, 1, cfg.blocks[i].pool_freq);
    h = ag::mask_frames(h, mask);
    f /= cfg.blocks[i].pool_freq;
  }
  const std::size_t channels = cfg.collapsed_channels();
  h = ag::reshape(h, {batch, frames, channels});

  Var fwd = ag::gru_over_time(h, param(params, "fx.bigru.fwd.wi"),
                              param(params, "fx.bigru.fwd.wh"),
                              param(params, "fx.bigru.fwd.b"), &mask, false);
  Var bwd = ag::gru_over_time(h, param(params, "fx.bigru.bwd.wi"),
                              param(params, "fx.bigru.bwd.wh"),
                              param(params, "fx.bigru.bwd.b"), &mask, true);
  return ag::mask_frames(ag::concat_last(fwd, bwd), mask);
}

LatentSequence extract(const Tensor& features, const FeatureExtractorConfig& cfg,
                       const ParamStore& params, ExtractorBuffers& buffers, nn::Mode mode) {
  expect_rank(features, 2, "feature sequence");
  const std::size_t frames = features.dim(0);
  Tape tape;
  std::map<std::string, Var> vars;
  for (const auto& [name, value] : params.params()) {
    if (name.rfind("fx.", 0) == 0) vars.emplace(name, tape.constant(value));
  }
  Var x = tape.constant(features.reshaped({1, frames, features.dim(1)}));
  Var r = extract(x, Tensor({1, frames}, 1.0), cfg, vars, buffers, mode);
  return r.value().reshaped({frames, cfg.latent_dim()});
}

}  // namespace csed
