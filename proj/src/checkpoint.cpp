#include "morphgrasp/checkpoint.hpp"

#include "morphgrasp/binary_io.hpp"
#include "morphgrasp/errors.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace morphgrasp {

using json = nlohmann::ordered_json;

namespace {

constexpr char kStateMagic[8] = {'M', 'G', 'S', 'T', 'A', 'T', 'E', '1'};

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << v;
  return ss.str();
}

json dims_json(const RunConfig& c) {
  return {{"dim", c.model.denoiser.dim},
          {"blocks", c.model.denoiser.blocks},
          {"cross_heads", c.model.denoiser.cross_heads},
          {"morph_layers", c.model.morph.layers},
          {"morph_heads", c.model.morph.heads},
          {"point_groups", c.model.points.groups},
          {"timesteps", c.diffusion.timesteps}};
}

void write_atomic(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError("cannot open checkpoint '" + path.string() + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

json parse_header(const std::vector<unsigned char>& bytes, const char* magic, std::size_t& offset,
                  const std::string& what) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), magic, 8) != 0) throw CheckpointError(what + ": bad magic");
  const std::uint32_t len = binary::get_u32(bytes.data() + 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(len)) throw CheckpointError(what + ": truncated header");
  offset = 12 + len;
  try {
    return json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  } catch (const json::parse_error& e) {
    throw CheckpointError(what + ": corrupt header: " + e.what());
  }
}

void check_tensors(const json& tensors, const ParamStore& params, const std::string& what) {
  const auto& items = params.items();
  if (tensors.size() != items.size()) {
    throw CheckpointError(what + ": has " + std::to_string(tensors.size()) + " tensors, model has " +
                          std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    const json& t = tensors[i];
    if (t.at("name").get<std::string>() != items[i].first) {
      throw CheckpointError(what + ": tensor " + std::to_string(i) + " is '" + t.at("name").get<std::string>() +
                            "', expected '" + items[i].first + "'");
    }
    if (t.at("rows").get<Eigen::Index>() != items[i].second.rows() ||
        t.at("cols").get<Eigen::Index>() != items[i].second.cols()) {
      throw CheckpointError(what + ": shape mismatch for '" + items[i].first + "'");
    }
  }
}

json tensor_table(const ParamStore& params) {
  json t = json::array();
  for (const auto& [name, v] : params.items()) t.push_back({{"name", name}, {"rows", v.rows()}, {"cols", v.cols()}});
  return t;
}

void put_header(std::vector<unsigned char>& out, const char* magic, const json& header) {
  out.insert(out.end(), magic, magic + 8);
  const std::string h = header.dump();
  binary::put_u32(out, static_cast<std::uint32_t>(h.size()));
  out.insert(out.end(), h.begin(), h.end());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const GraspModel& model, const RunConfig& config) {
  json header;
  header["format"] = "morphgrasp-checkpoint";
  header["version"] = 1;
  header["dims"] = dims_json(config);
  header["block_count"] = config.model.denoiser.blocks;
  header["config_hash"] = hex64(config.model_hash());
  header["tensors"] = tensor_table(model.params());
  std::vector<unsigned char> out;
  put_header(out, kCheckpointMagic, header);
  for (const auto& item : model.params().items()) {
    const ad::Matrix& v = item.second.value();
    for (Eigen::Index i = 0; i < v.size(); ++i) binary::put_f32(out, static_cast<float>(v.data()[i]));
  }
  write_atomic(path, out);
}

json read_checkpoint_header(const std::filesystem::path& path) {
  std::size_t offset = 0;
  return parse_header(read_all(path), kCheckpointMagic, offset, "checkpoint '" + path.string() + "'");
}

void load_checkpoint(const std::filesystem::path& path, GraspModel& model, const RunConfig& config) {
  const auto bytes = read_all(path);
  const std::string what = "checkpoint '" + path.string() + "'";
  std::size_t offset = 0;
  const json header = parse_header(bytes, kCheckpointMagic, offset, what);
  try {
    if (header.at("version").get<int>() != 1) throw CheckpointError(what + ": unsupported version");
    if (header.at("dims") != dims_json(config)) {
      throw CheckpointError(what + ": dims " + header.at("dims").dump() + " differ from config " + dims_json(config).dump());
    }
    if (header.at("config_hash").get<std::string>() != hex64(config.model_hash())) {
      throw CheckpointError(what + ": model configuration hash differs");
    }
    check_tensors(header.at("tensors"), model.params(), what);
  } catch (const json::exception& e) {
    throw CheckpointError(what + ": " + e.what());
  }
  std::size_t needed = offset;
  for (const auto& item : model.params().items()) needed += 4 * static_cast<std::size_t>(item.second.value().size());
  if (bytes.size() != needed) throw CheckpointError(what + ": payload size mismatch");
  for (auto& item : model.params().items()) {
    ad::Matrix& v = item.second.mutable_value();
    for (Eigen::Index i = 0; i < v.size(); ++i, offset += 4) v.data()[i] = binary::get_f32(bytes.data() + offset);
  }
}

void save_train_state(const std::filesystem::path& path, const GraspModel& model, const Adam& optimizer,
                      const std::mt19937_64& rng) {
  std::ostringstream rs;
  rs << rng;
  json header;
  header["format"] = "morphgrasp-train-state";
  header["version"] = 1;
  header["step"] = optimizer.steps();
  header["rng"] = rs.str();
  header["tensors"] = tensor_table(model.params());
  std::vector<unsigned char> out;
  put_header(out, kStateMagic, header);
  auto put_matrix = [&](const ad::Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) binary::put_f64(out, m.data()[i]);
  };
  const auto& items = model.params().items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    put_matrix(items[i].second.value());
    put_matrix(optimizer.first_moments()[i]);
    put_matrix(optimizer.second_moments()[i]);
  }
  write_atomic(path, out);
}

void load_train_state(const std::filesystem::path& path, GraspModel& model, Adam& optimizer, std::mt19937_64& rng) {
  const auto bytes = read_all(path);
  const std::string what = "train state '" + path.string() + "'";
  std::size_t offset = 0;
  const json header = parse_header(bytes, kStateMagic, offset, what);
  try {
    check_tensors(header.at("tensors"), model.params(), what);
    auto& items = model.params().items();
    std::size_t needed = offset;
    for (const auto& item : items) needed += 3 * 8 * static_cast<std::size_t>(item.second.value().size());
    if (bytes.size() != needed) throw CheckpointError(what + ": payload size mismatch");
    auto get_matrix = [&](ad::Matrix& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i, offset += 8) m.data()[i] = binary::get_f64(bytes.data() + offset);
    };
    for (std::size_t i = 0; i < items.size(); ++i) {
      get_matrix(items[i].second.mutable_value());
      get_matrix(optimizer.first_moments()[i]);
      get_matrix(optimizer.second_moments()[i]);
    }
    optimizer.set_steps(header.at("step").get<std::int64_t>());
    std::istringstream rs(header.at("rng").get<std::string>());
    rs >> rng;
    if (!rs) throw CheckpointError(what + ": corrupt RNG state");
  } catch (const json::exception& e) {
    throw CheckpointError(what + ": " + e.what());
  }
}

}  // namespace morphgrasp
