#include "rfl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

#include "rfl/error.hpp"

namespace rfl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using nlohmann::json;

namespace {

json net_to_json(const NetConfig& n) {
  return {{"backbone_channels", n.backbone.channels},
          {"hidden_channels", n.hidden_channels},
          {"gate_kernel", n.gate_kernel},
          {"zero_init", n.zero_init},
          {"shared_backbone", n.shared_backbone}};
}

NetConfig net_from_json(const json& j) {
  NetConfig n;
  n.backbone.channels = j.at("backbone_channels").get<std::array<int, 5>>();
  n.hidden_channels = j.at("hidden_channels").get<int>();
  n.gate_kernel = j.at("gate_kernel").get<int>();
  n.zero_init = j.at("zero_init").get<bool>();
  n.shared_backbone = j.at("shared_backbone").get<bool>();
  return n;
}

json train_to_json(const TrainConfig& t) {
  return {{"batch_size", t.batch_size},       {"clip_len", t.clip_len},
          {"lr0", t.lr0},                     {"lr_decay", t.lr_decay},
          {"decay_every", t.decay_every},     {"grad_clip", t.grad_clip},
          {"global_norm_clip", t.global_norm_clip}, {"total_iters", t.total_iters},
          {"seed", t.seed},                   {"balanced_loss", t.balanced_loss},
          {"augment", t.augment},             {"fixed_batch", t.fixed_batch},
          {"checkpoint_every", t.checkpoint_every}, {"out_dir", t.out_dir}};
}

TrainConfig train_from_json(const json& j, const NetConfig& net) {
  TrainConfig t;
  t.batch_size = j.at("batch_size").get<int>();
  t.clip_len = j.at("clip_len").get<int>();
  t.lr0 = j.at("lr0").get<double>();
  t.lr_decay = j.at("lr_decay").get<double>();
  t.decay_every = j.at("decay_every").get<int>();
  t.grad_clip = j.at("grad_clip").get<double>();
  t.global_norm_clip = j.at("global_norm_clip").get<bool>();
  t.total_iters = j.at("total_iters").get<int>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.balanced_loss = j.at("balanced_loss").get<bool>();
  t.augment = j.at("augment").get<bool>();
  t.fixed_batch = j.at("fixed_batch").get<bool>();
  t.checkpoint_every = j.at("checkpoint_every").get<int>();
  t.out_dir = j.at("out_dir").get<std::string>();
  t.net = net;
  return t;
}

struct Blob {
  std::string name;
  std::vector<int> shape;
  const float* data;
  std::size_t count;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::vector<Blob> blobs;
  for (const auto& p : ckpt.model.parameters()) {
    blobs.push_back({p.name, p.shape, p.value.data(), p.value.size()});
  }
  for (std::size_t k = 0; k < ckpt.adam.names.size(); ++k) {
    const auto n = static_cast<int>(ckpt.adam.m[k].size());
    blobs.push_back({"adam/m/" + ckpt.adam.names[k], {n}, ckpt.adam.m[k].data(), ckpt.adam.m[k].size()});
    blobs.push_back({"adam/v/" + ckpt.adam.names[k], {n}, ckpt.adam.v[k].data(), ckpt.adam.v[k].size()});
  }

  json header;
  header["version"] = kCheckpointVersion;
  header["iteration"] = ckpt.iteration;
  header["net"] = net_to_json(ckpt.model.config());
  header["train"] = train_to_json(ckpt.train);
  header["norm"] = {{"mean", ckpt.model.norm.mean}, {"stddev", ckpt.model.norm.stddev}};
  header["adam"] = {{"steps", ckpt.adam.steps},
                    {"beta1", ckpt.adam.beta1},
                    {"beta2", ckpt.adam.beta2},
                    {"eps", ckpt.adam.eps},
                    {"names", ckpt.adam.names}};
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& b : blobs) {
    tensors.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", offset}, {"count", b.count}});
    offset += b.count;
  }
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << kCheckpointVersion << '\n';
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& b : blobs) {
    out.write(reinterpret_cast<const char*>(b.data), static_cast<std::streamsize>(b.count * sizeof(float)));
  }
  if (!out) throw IoError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::string tag;
  if (!std::getline(in, tag)) throw FormatError(path + ": empty file");
  if (tag != kCheckpointVersion) {
    if (tag.rfind("rfl-ckpt-", 0) == 0) {
      throw VersionError(path + ": checkpoint version '" + tag + "', this build reads '" + kCheckpointVersion + "'");
    }
    throw FormatError(path + ": not a checkpoint file");
  }
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof(len)) || len > (1ull << 30)) {
    throw FormatError(path + ": bad header length");
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError(path + ": truncated header");
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint ck;
  try {
    const json header = json::parse(text);
    if (header.at("version").get<std::string>() != kCheckpointVersion) {
      throw VersionError(path + ": header version mismatch");
    }
    const NetConfig net = net_from_json(header.at("net"));
    ck.train = train_from_json(header.at("train"), net);
    ck.iteration = header.at("iteration").get<int>();
    ck.model = RflModel<float>(net, 0);
    ck.model.norm.mean = header.at("norm").at("mean").get<std::array<float, 3>>();
    ck.model.norm.stddev = header.at("norm").at("stddev").get<std::array<float, 3>>();
    const json& adam = header.at("adam");
    ck.adam.steps = adam.at("steps").get<std::int64_t>();
    ck.adam.beta1 = adam.at("beta1").get<double>();
    ck.adam.beta2 = adam.at("beta2").get<double>();
    ck.adam.eps = adam.at("eps").get<double>();
    ck.adam.names = adam.at("names").get<std::vector<std::string>>();

    std::map<std::string, std::pair<std::size_t, std::size_t>> index;
    std::size_t total = 0;
    for (const auto& t : header.at("tensors")) {
      const auto off = t.at("offset").get<std::size_t>();
      const auto cnt = t.at("count").get<std::size_t>();
      index[t.at("name").get<std::string>()] = {off, cnt};
      total = std::max(total, off + cnt);
    }
    if (payload.size() != total * sizeof(float)) {
      throw FormatError(path + ": payload has " + std::to_string(payload.size()) + " bytes, expected " +
                        std::to_string(total * sizeof(float)));
    }
    auto fetch = [&](const std::string& name, std::span<float> dst) {
      auto it = index.find(name);
      if (it == index.end()) throw FormatError(path + ": missing tensor " + name);
      if (it->second.second != dst.size()) throw FormatError(path + ": size mismatch for " + name);
      std::memcpy(dst.data(), payload.data() + it->second.first * sizeof(float), dst.size_bytes());
    };
    for (auto& p : ck.model.parameters()) fetch(p.name, p.value);
    for (const auto& n : ck.adam.names) {
      auto it = index.find("adam/m/" + n);
      if (it == index.end()) throw FormatError(path + ": missing optimizer moment for " + n);
      ck.adam.m.emplace_back(it->second.second);
      ck.adam.v.emplace_back(it->second.second);
      fetch("adam/m/" + n, ck.adam.m.back());
      fetch("adam/v/" + n, ck.adam.v.back());
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": malformed header: " + e.what());
  }
  return ck;
}

}  // namespace rfl
