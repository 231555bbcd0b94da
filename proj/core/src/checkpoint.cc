// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// Layout: "REPL1\n", a single-line JSON header, then the parameter values as
// native float64 in named_parameters() order, followed by the momentum
// buffers in the same order when the header says so.

#include <bit>
#include <fstream>
#include <span>

#include "repsup/model.h"
#include "repsup/serialization.h"

namespace repsup {

namespace {

constexpr const char* kMagic = "REPL1";

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian float64");

void write_doubles(std::ostream& os, std::span<const double> v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& is, std::span<double> v, const std::string& what) {
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!is) throw InputError("checkpoint: truncated payload while reading " + what);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const CheckpointExtras& extras) {
  const auto named = params.named_parameters();
  if (!extras.momentum.empty() && extras.momentum.size() != named.size()) {
    throw InputError("checkpoint: momentum buffers do not match the parameters");
  }
  nlohmann::ordered_json header;
  header["toolkit_version"] = version();
  header["config"] = to_json(params.config);
  auto& tensors = header["tensors"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, t] = named[i];
    tensors.push_back({{"name", name}, {"shape", t.shape()}});
    if (!extras.momentum.empty() && extras.momentum[i].size() != t.size()) {
      throw InputError("checkpoint: momentum buffer for " + name + " has the wrong size");
    }
  }
  header["vocab"] = extras.vocab;
  try {
    header["metadata"] = nlohmann::ordered_json::parse(extras.metadata_json);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: metadata is not valid JSON: ") + e.what());
  }
  header["step"] = extras.step;
  header["has_momentum"] = !extras.momentum.empty();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("checkpoint: cannot open " + tmp.string() + " for writing");
    os << kMagic << '\n' << header.dump() << '\n';
    for (const auto& [name, t] : named) write_doubles(os, t.values());
    for (const auto& m : extras.momentum) write_doubles(os, m);
    if (!os) throw InputError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelParams load_checkpoint(const std::filesystem::path& path, CheckpointExtras* extras) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("checkpoint: cannot open " + path.string());
  std::string magic, header_line;
  std::getline(is, magic);
  if (magic != kMagic) throw InputError("checkpoint: " + path.string() + " is not a REPL1 file");
  std::getline(is, header_line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: malformed header: ") + e.what());
  }

  ModelConfig config = model_config_from_json(header.at("config"), "checkpoint.config");
  config.validate();
  ModelParams params = init_params(config);
  const auto named = params.named_parameters();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != named.size()) {
    throw InputError("checkpoint: header lists " + std::to_string(tensors.size()) +
                     " tensors, model expects " + std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, t] = named[i];
    const auto stored_name = tensors[i].at("name").get<std::string>();
    const auto stored_shape = tensors[i].at("shape").get<ad::Shape>();
    if (stored_name != name || stored_shape != t.shape()) {
      throw InputError("checkpoint: tensor " + std::to_string(i) + " is " + stored_name + " " +
                       ad::to_string(stored_shape) + ", expected " + name + " " +
                       ad::to_string(t.shape()));
    }
    ad::Tensor target = t;
    read_doubles(is, target.mutable_values(), name);
  }

  if (extras) {
    extras->vocab = header.value("vocab", std::vector<std::string>{});
    extras->metadata_json = header.contains("metadata") ? header["metadata"].dump() : "{}";
    extras->step = header.value("step", std::int64_t{0});
    extras->momentum.clear();
    if (header.value("has_momentum", false)) {
      for (const auto& [name, t] : named) {
        std::vector<double> m(t.size());
        read_doubles(is, m, "momentum of " + name);
        extras->momentum.push_back(std::move(m));
      }
    }
  }
  return params;
}

const char* version() noexcept { return REPSUP_VERSION; }

}  // namespace repsup
