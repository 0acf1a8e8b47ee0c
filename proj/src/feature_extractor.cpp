#include "srres/feature_extractor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "srres/ops.hpp"
#include "srres/rng.hpp"

namespace srres::nn {

namespace {

constexpr std::uint64_t kBuiltinSeed = 0x5eedf00d;

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    std::size_t used = 0;
    const int v = std::stoi(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad integer list '" + s + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

FeatureExtractor::FeatureExtractor(std::string kind, int channels, std::vector<Stage> stages,
                                   std::vector<int> taps)
    : kind_(std::move(kind)), channels_(channels), stages_(std::move(stages)), taps_(std::move(taps)) {
  if (channels_ < 1) throw std::invalid_argument("feature extractor needs at least one channel");
  if (taps_.empty()) throw std::invalid_argument("feature extractor needs at least one tap");
  int in = channels_;
  for (const Stage& s : stages_) {
    if (s.weight.c() != in || s.weight.h() != 3 || s.weight.w() != 3) {
      throw std::invalid_argument("feature extractor stage weights have shape " +
                                  s.weight.shape_string() + ", expected Kx" + std::to_string(in) +
                                  "x3x3");
    }
    if (static_cast<int>(s.bias.size()) != s.weight.n()) {
      throw std::invalid_argument("feature extractor stage bias size mismatch");
    }
    if (s.stride < 1) throw std::invalid_argument("feature extractor stride must be positive");
    in = s.weight.n();
  }
  for (int t : taps_) {
    if (t < 0 || t > static_cast<int>(stages_.size())) {
      throw std::invalid_argument("feature extractor tap " + std::to_string(t) + " out of range");
    }
  }
}

FeatureExtractor FeatureExtractor::builtin(int channels) {
  Rng rng(kBuiltinSeed);
  const int widths[3] = {16, 32, 64};
  const int strides[3] = {1, 2, 2};
  std::vector<Stage> stages;
  int in = channels;
  for (int i = 0; i < 3; ++i) {
    Stage s;
    s.weight = Tensor(widths[i], in, 3, 3);
    const double gain = std::sqrt(2.0 / (in * 9.0));
    for (double& v : s.weight.values()) v = gain * normal(rng);
    s.bias = Tensor(1, widths[i], 1, 1);
    s.stride = strides[i];
    stages.push_back(std::move(s));
    in = widths[i];
  }
  return FeatureExtractor("builtin", channels, std::move(stages), {1, 2, 3});
}

FeatureExtractor FeatureExtractor::identity(int channels) {
  return FeatureExtractor("identity", channels, {}, {0});
}

Archive FeatureExtractor::to_archive() const {
  Archive a;
  a.put_string("kind", kind_);
  a.put_string("taps", join(taps_));
  a.put_string("channels", std::to_string(channels_));
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string p = "stage" + std::to_string(i);
    a.put(p + ".w", stages_[i].weight);
    a.put(p + ".b", stages_[i].bias);
    a.put_scalar(p + ".stride", stages_[i].stride);
  }
  return a;
}

FeatureExtractor FeatureExtractor::from_archive(const Archive& a) {
  std::vector<Stage> stages;
  for (int i = 0;; ++i) {
    const std::string p = "stage" + std::to_string(i);
    if (!a.has(p + ".w")) break;
    stages.push_back({a.tensor(p + ".w"), a.tensor(p + ".b"), static_cast<int>(a.scalar(p + ".stride"))});
  }
  return FeatureExtractor(a.string("kind"), std::stoi(a.string("channels")), std::move(stages),
                          split_ints(a.string("taps")));
}

FeatureExtractor FeatureExtractor::load(const std::filesystem::path& path) {
  return from_archive(Archive::load(path));
}

void FeatureExtractor::save(const std::filesystem::path& path) const { to_archive().save(path); }

FeatureExtractor FeatureExtractor::named(const std::string& spec, int channels) {
  if (spec == "builtin") return builtin(channels);
  if (spec == "identity") return identity(channels);
  FeatureExtractor ext = load(spec);
  if (ext.channels() != channels) {
    throw std::invalid_argument("feature extractor '" + spec + "' expects " +
                                std::to_string(ext.channels()) + " channels");
  }
  return ext;
}

std::vector<Var> FeatureExtractor::features(Tape& tape, Var x) const {
  if (x.value().c() != channels_) {
    throw std::invalid_argument("feature extractor expects " + std::to_string(channels_) +
                                " channels, got " + std::to_string(x.value().c()));
  }
  std::vector<Var> outputs{x};
  Var h = x;
  for (const Stage& s : stages_) {
    h = relu(conv2d(h, tape.constant(s.weight), tape.constant(s.bias), {s.stride, 1, Padding::reflect}));
    outputs.push_back(h);
  }
  std::vector<Var> selected;
  for (int t : taps_) selected.push_back(outputs[t]);
  return selected;
}

std::vector<Tensor> FeatureExtractor::features(const Tensor& x) const {
  Tape tape;
  std::vector<Tensor> out;
  for (const Var& v : features(tape, tape.constant(x))) out.push_back(v.value());
  return out;
}

}  // namespace srres::nn
