#include "mdfl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "mdfl/errors.hpp"

namespace mdfl {

static_assert(std::endian::native == std::endian::little, "checkpoint payload is written in host byte order");

namespace {

constexpr char kMagic[4] = {'M', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& in, const std::string& path) {
  U v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ShapeMismatchError("truncated checkpoint " + path);
  return v;
}

}  // namespace

std::string log_csv(const std::vector<LogRow>& rows) {
  std::ostringstream out;
  out << "epoch,lr,loss,train_oa\n" << std::setprecision(9);
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.lr << ',' << r.loss << ',';
    if (r.train_oa) out << *r.train_oa;
    out << '\n';
  }
  return out.str();
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  nlohmann::ordered_json h;
  h["stage"] = c.stage;
  h["modality"] = c.modality;
  h["epoch"] = c.epoch;
  h["complete"] = c.complete;
  h["config"] = nlohmann::ordered_json::parse(config_to_json(c.config));
  h["rng"] = {{"seed", c.rng_seed}, {"next_epoch", c.epoch}};
  h["scene"] = {{"hsi_channels", c.hsi_channels}, {"lidar_channels", c.lidar_channels}, {"num_classes", c.num_classes}};
  h["adam"] = {{"steps", c.adam_steps}, {"skipped", c.adam_skipped}};
  auto log = nlohmann::ordered_json::array();
  for (const auto& r : c.log) {
    log.push_back({{"epoch", r.epoch}, {"lr", r.lr}, {"loss", r.loss},
                   {"train_oa", r.train_oa ? nlohmann::ordered_json(*r.train_oa) : nlohmann::ordered_json(nullptr)}});
  }
  h["log"] = log;
  auto list = nlohmann::ordered_json::array();
  for (const auto& [name, t] : c.tensors) list.push_back({{"name", name}, {"shape", t.shape()}});
  h["tensors"] = list;
  const std::string header = h.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, t] : c.tensors) {
      out.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!out.flush()) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("checkpoint not found: " + path.string());
  const std::string p = path.string();
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw BadMagicError("not a checkpoint (bad magic): " + p);
  const auto version = get<std::uint32_t>(in, p);
  if (version != kVersion) throw BadMagicError("unsupported checkpoint version " + std::to_string(version) + ": " + p);
  const auto len = get<std::uint64_t>(in, p);
  std::string header(len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(len))) throw ShapeMismatchError("truncated checkpoint " + p);

  Checkpoint c;
  try {
    const auto h = nlohmann::json::parse(header);
    c.stage = h.at("stage").get<std::string>();
    c.modality = h.at("modality").get<std::string>();
    c.epoch = h.at("epoch").get<std::size_t>();
    c.complete = h.at("complete").get<bool>();
    c.config = parse_config(h.at("config").dump());
    c.rng_seed = h.at("rng").at("seed").get<std::uint64_t>();
    c.hsi_channels = h.at("scene").at("hsi_channels").get<std::size_t>();
    c.lidar_channels = h.at("scene").at("lidar_channels").get<std::size_t>();
    c.num_classes = h.at("scene").at("num_classes").get<std::size_t>();
    c.adam_steps = h.at("adam").at("steps").get<std::size_t>();
    c.adam_skipped = h.at("adam").at("skipped").get<std::size_t>();
    for (const auto& r : h.at("log")) {
      LogRow row{r.at("epoch").get<std::size_t>(), r.at("lr").get<double>(), r.at("loss").get<double>(), {}};
      if (!r.at("train_oa").is_null()) row.train_oa = r.at("train_oa").get<double>();
      c.log.push_back(row);
    }
    for (const auto& t : h.at("tensors")) {
      Tensor<float> tensor(t.at("shape").get<Shape>());
      if (!in.read(reinterpret_cast<char*>(tensor.ptr()), static_cast<std::streamsize>(tensor.size() * sizeof(float)))) {
        throw ShapeMismatchError("checkpoint payload shorter than its header: " + p);
      }
      c.tensors.emplace(t.at("name").get<std::string>(), std::move(tensor));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header in " + p + ": " + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ShapeMismatchError("trailing bytes in checkpoint " + p);
  return c;
}

void store_params(Checkpoint& ckpt, const ParamList<float>& params) {
  for (const auto* p : params) ckpt.tensors.insert_or_assign(p->name, p->value);
}

void restore_params(const Checkpoint& ckpt, const ParamList<float>& params) {
  for (auto* p : params) {
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end()) throw DataError("checkpoint lacks parameter " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw ShapeMismatchError("checkpoint parameter " + p->name + " has shape " + shape_str(it->second.shape()) +
                               ", model expects " + shape_str(p->value.shape()));
    }
    p->value = it->second;
  }
}

void store_adam(Checkpoint& ckpt, Adam<float>& adam) {
  ckpt.adam_steps = adam.steps();
  ckpt.adam_skipped = adam.skipped();
  for (std::size_t i = 0; i < adam.params().size(); ++i) {
    ckpt.tensors.insert_or_assign("adam.m/" + adam.params()[i]->name, adam.first_moments()[i]);
    ckpt.tensors.insert_or_assign("adam.v/" + adam.params()[i]->name, adam.second_moments()[i]);
  }
}

void restore_adam(const Checkpoint& ckpt, Adam<float>& adam) {
  for (std::size_t i = 0; i < adam.params().size(); ++i) {
    const auto& name = adam.params()[i]->name;
    auto m = ckpt.tensors.find("adam.m/" + name), v = ckpt.tensors.find("adam.v/" + name);
    if (m == ckpt.tensors.end() || v == ckpt.tensors.end()) throw DataError("checkpoint lacks optimizer state for " + name);
    adam.first_moments()[i] = m->second;
    adam.second_moments()[i] = v->second;
  }
  adam.set_steps(ckpt.adam_steps);
  adam.set_skipped(ckpt.adam_skipped);
}

}  // namespace mdfl
