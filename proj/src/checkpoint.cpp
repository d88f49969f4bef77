#include "fedst/checkpoint.hpp"

#include <fstream>

#include "fedst/error.hpp"
#include "fedst/serialize.hpp"

namespace fedst {

namespace {

constexpr const char* kMagic = "fedst-checkpoint-v1";

std::vector<std::pair<std::string, const Matrix*>> constRefs(const ClientParams& p,
                                                             const std::string& prefix) {
  auto refs = paramRefs(const_cast<ClientParams&>(p), prefix);
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, ptr] : refs) out.emplace_back(name, ptr);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> constRefs(const ServerParams& p) {
  auto refs = paramRefs(const_cast<ServerParams&>(p), "srv");
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, ptr] : refs) out.emplace_back(name, ptr);
  return out;
}

}  // namespace

void saveCheckpoint(const std::string& path, const FederatedTrainer& trainer,
                    std::uint64_t config_hash) {
  const TrainConfig& cfg = trainer.config();
  ByteWriter w;
  w.str(kMagic);
  w.u64(config_hash);
  w.u32(static_cast<std::uint32_t>(trainer.clients().size()));
  w.u32(static_cast<std::uint32_t>(cfg.hidden));
  w.u32(static_cast<std::uint32_t>(cfg.gru_layers));
  w.u32(static_cast<std::uint32_t>(cfg.server_layers));
  w.u32(static_cast<std::uint32_t>(cfg.input_len));
  w.u32(static_cast<std::uint32_t>(cfg.horizon));
  const auto branches = cfg.ablation.branchNames();
  w.u32(static_cast<std::uint32_t>(branches.size()));
  for (const auto& b : branches) w.str(b);
  w.u32(cfg.ablation.no_decomposition ? 1U : 0U);

  const Normalizer& nz = trainer.data().norm;
  Matrix mean(nz.mean.size(), 1), stddev(nz.stddev.size(), 1);
  mean.col(0) = nz.mean;
  stddev.col(0) = nz.stddev;
  w.matrix(mean);
  w.matrix(stddev);

  for (std::size_t i = 0; i < trainer.clients().size(); ++i) {
    const auto refs = constRefs(trainer.clients()[i], "cli");
    w.u32(static_cast<std::uint32_t>(refs.size()));
    for (const auto& [name, tensor] : refs) {
      w.str(name);
      w.matrix(*tensor);
    }
  }
  const auto srv = constRefs(trainer.server());
  w.u32(static_cast<std::uint32_t>(srv.size()));
  for (const auto& [name, tensor] : srv) {
    w.str(name);
    w.matrix(*tensor);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(w.bytes().data()),
            static_cast<std::streamsize>(w.size()));
}

void loadCheckpoint(const std::string& path, FederatedTrainer& trainer) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  ByteReader r(bytes);
  if (r.str() != kMagic) throw ConfigError("checkpoint '" + path + "': bad magic");
  (void)r.u64();  // producing config hash; informational

  const TrainConfig& cfg = trainer.config();
  const auto check = [&](std::uint32_t got, Index want, const std::string& what) {
    if (static_cast<Index>(got) != want) {
      throw ConfigError("checkpoint '" + path + "': " + what + " is " + std::to_string(got) +
                        " but the configuration expects " + std::to_string(want));
    }
  };
  check(r.u32(), static_cast<Index>(trainer.clients().size()), "client count");
  check(r.u32(), cfg.hidden, "hidden width");
  check(r.u32(), cfg.gru_layers, "gru layer count");
  check(r.u32(), cfg.server_layers, "server layer count");
  check(r.u32(), cfg.input_len, "input length");
  check(r.u32(), cfg.horizon, "horizon");
  const auto branches = cfg.ablation.branchNames();
  check(r.u32(), static_cast<Index>(branches.size()), "branch count");
  for (const auto& b : branches) {
    const std::string got = r.str();
    if (got != b) {
      throw ConfigError("checkpoint '" + path + "': branch '" + got + "' but config has '" + b +
                        "'");
    }
  }
  check(r.u32(), cfg.ablation.no_decomposition ? 1 : 0, "decomposition flag");

  const Matrix mean = r.matrix();
  const Matrix stddev = r.matrix();
  (void)mean;
  (void)stddev;  // normalizer is rebuilt from the dataset; stored copy is provenance

  const auto load_tensors = [&](ParamRefs refs) {
    const std::uint32_t count = r.u32();
    if (count != refs.size()) {
      throw ConfigError("checkpoint '" + path + "': tensor inventory mismatch");
    }
    for (std::uint32_t j = 0; j < count; ++j) {
      const std::string name = r.str();
      const Matrix tensor = r.matrix();
      if (name != refs[j].first) {
        throw ConfigError("checkpoint '" + path + "': tensor '" + name + "' where '" +
                          refs[j].first + "' was expected");
      }
      if (tensor.rows() != refs[j].second->rows() || tensor.cols() != refs[j].second->cols()) {
        throw ConfigError("checkpoint '" + path + "': tensor '" + name + "' is " +
                          shapeStr(tensor.rows(), tensor.cols()) + ", expected " +
                          shapeStr(refs[j].second->rows(), refs[j].second->cols()));
      }
      *refs[j].second = tensor;
    }
  };
  for (auto& client : trainer.clientsMutable()) load_tensors(paramRefs(client, "cli"));
  load_tensors(paramRefs(trainer.serverMutable(), "srv"));
}

}  // namespace fedst
