#include "rfl/model.hpp"

#include <cstring>
#include <map>

namespace rfl {

namespace {

template <typename T, typename M>
void add_backbone(std::vector<ParamRef<T>>& out, const std::string& prefix, M& net) {
  for (int l = 0; l < 5; ++l) {
    const std::string p = prefix + "/conv" + std::to_string(l + 1) + "/";
    auto& conv = net.conv[l];
    auto& bn = net.bn[l];
    const int ch = bn.channels();
    out.push_back({p + "kernel", conv.weight.shape, conv.weight.value, conv.weight.grad});
    out.push_back({p + "bias", conv.bias.shape, conv.bias.value, conv.bias.grad});
    out.push_back({p + "bn_scale", bn.scale.shape, bn.scale.value, bn.scale.grad});
    out.push_back({p + "bn_offset", bn.offset.shape, bn.offset.value, bn.offset.grad});
    out.push_back({p + "bn_mean", {ch}, bn.running_mean, {}});
    out.push_back({p + "bn_var", {ch}, bn.running_var, {}});
  }
}

template <typename T, typename C>
void add_conv(std::vector<ParamRef<T>>& out, const std::string& prefix, C& conv) {
  out.push_back({prefix + "/kernel", conv.weight.shape, conv.weight.value, conv.weight.grad});
  out.push_back({prefix + "/bias", conv.bias.shape, conv.bias.value, conv.bias.grad});
}

template <typename T, typename G>
void add_lstm(std::vector<ParamRef<T>>& out, G& gen) {
  auto& gates = gen.gates;
  const int hid = gen.spec().hidden_channels;
  const int in = gates.in_channels();
  const int k = gates.kernel();
  const std::size_t rows = static_cast<std::size_t>(in) * k * k;
  const char* names[4] = {"Wf", "Wi", "We", "Wo"};
  for (int g = 0; g < 4; ++g) {
    const std::string p = std::string("lstm/") + names[g];
    const std::size_t w0 = static_cast<std::size_t>(g) * hid * rows;
    const std::size_t b0 = static_cast<std::size_t>(g) * hid;
    out.push_back({p + "/kernel", {hid, in, k, k},
                   std::span(gates.weight.value).subspan(w0, hid * rows),
                   std::span(gates.weight.grad).subspan(w0, hid * rows)});
    out.push_back({p + "/bias", {hid}, std::span(gates.bias.value).subspan(b0, hid),
                   std::span(gates.bias.grad).subspan(b0, hid)});
  }
  add_conv(out, "lstm/Wl", gen.output);
  add_conv(out, "init/h", gen.init_h);
  add_conv(out, "init/c", gen.init_c);
}

}  // namespace

template <typename T>
RflModel<T>::RflModel(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  std::mt19937_64 rng(seed);
  ecnn = Backbone<T>(cfg.backbone, rng);
  if (!cfg.shared_backbone) scnn = Backbone<T>(cfg.backbone, rng);
  LstmSpec ls;
  ls.input_channels = cfg.feature_channels();
  ls.hidden_channels = cfg.hidden_channels;
  ls.gate_kernel = cfg.gate_kernel;
  ls.zero_init = cfg.zero_init;
  ls.feature_extent = kExemplarFeatureExtent;
  lstm = FilterGenerator<T>(ls, rng);
}

template <typename T>
std::vector<ParamRef<T>> RflModel<T>::parameters() {
  std::vector<ParamRef<T>> out;
  add_backbone(out, "ecnn", ecnn);
  if (!cfg_.shared_backbone) add_backbone(out, "scnn", scnn);
  add_lstm(out, lstm);
  return out;
}

template <typename T>
std::vector<ParamRef<const T>> RflModel<T>::parameters() const {
  auto mut = const_cast<RflModel<T>*>(this)->parameters();
  std::vector<ParamRef<const T>> out;
  out.reserve(mut.size());
  for (auto& p : mut) out.push_back({p.name, p.shape, p.value, p.grad});
  return out;
}

template <typename T>
void RflModel<T>::zero_grad() {
  for (auto& p : parameters()) std::fill(p.grad.begin(), p.grad.end(), T(0));
}

template <typename T>
std::size_t RflModel<T>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) {
    if (p.trainable()) n += p.value.size();
  }
  return n;
}

template <typename T>
std::uint64_t RflModel<T>::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : parameters()) {
    mix(p.name.data(), p.name.size());
    mix(p.value.data(), p.value.size_bytes());
  }
  mix(norm.mean.data(), sizeof(norm.mean));
  mix(norm.stddev.data(), sizeof(norm.stddev));
  return h;
}

template <typename T>
template <typename U>
void RflModel<T>::copy_from(const RflModel<U>& other) {
  if (!(other.config() == cfg_)) throw Error("copy_from: network configurations differ");
  std::map<std::string, ParamRef<const U>> src;
  for (auto& p : other.parameters()) src.emplace(p.name, p);
  for (auto& p : parameters()) {
    const auto& s = src.at(p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = static_cast<T>(s.value[i]);
  }
  norm = other.norm;
}

template <typename T>
Tensor<T> extract_exemplar_features(RflModel<T>& model, const ImagePatch& patch, Mode mode) {
  if (patch.width != kExemplarSize || patch.height != kExemplarSize) {
    throw ShapeError("exemplar patch must be 127x127x3, got " + std::to_string(patch.height) + "x" +
                     std::to_string(patch.width) + "x3");
  }
  auto input = to_input_tensor<T>(patch, model.norm);
  if (mode == Mode::Infer) return model.exemplar_net().forward_infer(input);
  std::vector<Tensor<T>> batch{std::move(input)};
  return model.exemplar_net().forward(std::move(batch), Mode::Train, nullptr, false).front();
}

template <typename T>
std::vector<Tensor<T>> extract_search_features(RflModel<T>& model, const std::vector<ImagePatch>& patches,
                                               Mode mode) {
  std::vector<Tensor<T>> batch;
  batch.reserve(patches.size());
  for (const auto& p : patches) {
    if (p.width != kSearchSize || p.height != kSearchSize) {
      throw ShapeError("search patch must be 255x255x3, got " + std::to_string(p.height) + "x" +
                       std::to_string(p.width) + "x3");
    }
    batch.push_back(to_input_tensor<T>(p, model.norm));
  }
  if (mode == Mode::Infer) {
    std::vector<Tensor<T>> out;
    for (const auto& x : batch) out.push_back(model.search_net().forward_infer(x));
    return out;
  }
  return model.search_net().forward(std::move(batch), Mode::Train, nullptr, false);
}

template <typename T>
Tensor<T> exemplar_features(const RflModel<T>& model, const ImagePatch& patch) {
  return extract_exemplar_features(const_cast<RflModel<T>&>(model), patch, Mode::Infer);
}

template <typename T>
std::vector<Tensor<T>> search_features(const RflModel<T>& model, const std::vector<ImagePatch>& patches) {
  return extract_search_features(const_cast<RflModel<T>&>(model), patches, Mode::Infer);
}

template class RflModel<float>;
template class RflModel<double>;
template void RflModel<float>::copy_from<float>(const RflModel<float>&);
template void RflModel<float>::copy_from<double>(const RflModel<double>&);
template void RflModel<double>::copy_from<float>(const RflModel<float>&);
template void RflModel<double>::copy_from<double>(const RflModel<double>&);

template Tensor<float> extract_exemplar_features<float>(RflModel<float>&, const ImagePatch&, Mode);
template Tensor<double> extract_exemplar_features<double>(RflModel<double>&, const ImagePatch&, Mode);
template std::vector<Tensor<float>> extract_search_features<float>(RflModel<float>&,
                                                                   const std::vector<ImagePatch>&, Mode);
template std::vector<Tensor<double>> extract_search_features<double>(RflModel<double>&,
                                                                     const std::vector<ImagePatch>&, Mode);
template Tensor<float> exemplar_features<float>(const RflModel<float>&, const ImagePatch&);
template Tensor<double> exemplar_features<double>(const RflModel<double>&, const ImagePatch&);
template std::vector<Tensor<float>> search_features<float>(const RflModel<float>&,
                                                           const std::vector<ImagePatch>&);
template std::vector<Tensor<double>> search_features<double>(const RflModel<double>&,
                                                             const std::vector<ImagePatch>&);

}  // namespace rfl
