#include "diffce/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace diffce {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'D', 'I', 'F', 'F', 'C', 'K', 'P', 'T'};

void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_le(std::ostream& out, float f) {
  const auto v = std::bit_cast<std::uint32_t>(f);
  write_u32_le(out, v);
}

float read_f32_le(std::istream& in) {
  return std::bit_cast<float>(read_u32_le(in));
}
}  // namespace

void save_checkpoint(
    const std::string& path, const std::string& kind, const json& meta,
    const std::vector<std::pair<std::string, const Eigen::MatrixXd*>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("save_checkpoint: cannot open " + path);
  json header = meta;
  header["format_version"] = 1;
  header["kind"] = kind;
  json tlist = json::array();
  for (const auto& [name, m] : tensors)
    tlist.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  header["tensors"] = tlist;
  const std::string hs = header.dump();
  out.write(kMagic, sizeof(kMagic));
  write_u32_le(out, static_cast<std::uint32_t>(hs.size()));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, m] : tensors) {
    for (Eigen::Index j = 0; j < m->cols(); ++j)
      for (Eigen::Index i = 0; i < m->rows(); ++i)
        write_f32_le(out, static_cast<float>((*m)(i, j)));
  }
  if (!out)
    throw std::runtime_error("save_checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: " + path +
                             " is not a checkpoint file (bad magic)");
  const std::uint32_t hlen = read_u32_le(in);
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  if (!in)
    throw std::runtime_error("load_checkpoint: truncated header in " + path);
  LoadedCheckpoint ck;
  ck.meta = json::parse(hs);
  if (ck.meta.value("format_version", -1) != 1)
    throw std::runtime_error("load_checkpoint: unsupported format_version in " +
                             path);
  ck.kind = ck.meta.at("kind").get<std::string>();
  for (const auto& t : ck.meta.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i)
        m(i, j) = static_cast<double>(read_f32_le(in));
    if (!in)
      throw std::runtime_error("load_checkpoint: truncated payload for tensor " +
                               name + " in " + path);
    ck.tensors.emplace(name, std::move(m));
  }
  return ck;
}

namespace {
// Copies named tensors into a model, insisting on exact shape agreement.
template <typename Model>
void fill_parameters(Model& model, LoadedCheckpoint& ck,
                     const std::string& path) {
  for (auto& [name, tensor] : model.named_parameters()) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end())
      throw std::runtime_error("checkpoint " + path + " is missing tensor " +
                               name);
    if (it->second.rows() != tensor->value.rows() ||
        it->second.cols() != tensor->value.cols())
      throw std::runtime_error("checkpoint " + path + " tensor " + name +
                               " has wrong shape");
    tensor->value = it->second;
  }
}
}  // namespace

void save_denoiser(const std::string& path, DenoiserModel& model,
                   const VpSchedule& sched, const std::string& config_digest) {
  json meta = {
      {"data_dim", model.dim()},
      {"n_classes", model.n_classes()},
      {"hidden_dim", model.config().hidden_dim},
      {"n_blocks", model.config().n_blocks},
      {"time_freqs", model.config().time_freqs},
      {"config_digest", config_digest},
      {"schedule",
       {{"beta_min", sched.beta_min},
        {"beta_max", sched.beta_max},
        {"t_min", sched.t_min}}},
  };
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> tensors;
  for (auto& [name, tensor] : model.named_parameters())
    tensors.emplace_back(name, &tensor->value);
  save_checkpoint(path, "denoiser", meta, tensors);
}

LoadedDenoiser load_denoiser(const std::string& path) {
  LoadedCheckpoint ck = load_checkpoint(path);
  if (ck.kind != "denoiser")
    throw std::runtime_error("load_denoiser: " + path + " holds a '" +
                             ck.kind + "' checkpoint");
  DenoiserConfig cfg;
  cfg.hidden_dim = ck.meta.at("hidden_dim").get<int>();
  cfg.n_blocks = ck.meta.at("n_blocks").get<int>();
  cfg.time_freqs = ck.meta.at("time_freqs").get<int>();
  LoadedDenoiser out{
      DenoiserModel(ck.meta.at("data_dim").get<int>(),
                    ck.meta.at("n_classes").get<int>(), cfg, 0),
      VpSchedule{}, ck.meta.value("config_digest", "")};
  const auto& s = ck.meta.at("schedule");
  out.sched.beta_min = s.at("beta_min").get<double>();
  out.sched.beta_max = s.at("beta_max").get<double>();
  out.sched.t_min = s.at("t_min").get<double>();
  fill_parameters(out.model, ck, path);
  return out;
}

void save_classifier(const std::string& path, ClassifierModel& model,
                     double train_epsilon, const std::string& config_digest) {
  json meta = {
      {"dim", model.dim()},
      {"n_classes", model.n_classes()},
      {"hidden_dim", model.config().hidden_dim},
      {"n_hidden", model.config().n_hidden},
      {"train_epsilon", train_epsilon},
      {"config_digest", config_digest},
  };
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> tensors;
  for (auto& [name, tensor] : model.named_parameters())
    tensors.emplace_back(name, &tensor->value);
  save_checkpoint(path, "classifier", meta, tensors);
}

LoadedClassifier load_classifier(const std::string& path) {
  LoadedCheckpoint ck = load_checkpoint(path);
  if (ck.kind != "classifier")
    throw std::runtime_error("load_classifier: " + path + " holds a '" +
                             ck.kind + "' checkpoint");
  ClassifierConfig cfg;
  cfg.hidden_dim = ck.meta.at("hidden_dim").get<int>();
  cfg.n_hidden = ck.meta.at("n_hidden").get<int>();
  LoadedClassifier out{
      ClassifierModel(ck.meta.at("dim").get<int>(),
                      ck.meta.at("n_classes").get<int>(), cfg, 0),
      ck.meta.at("train_epsilon").get<double>(),
      ck.meta.value("config_digest", "")};
  fill_parameters(out.model, ck, path);
  return out;
}

}  // namespace diffce
