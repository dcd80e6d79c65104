#include "mip/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "json_io.hpp"

namespace mip {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic = {'M', 'I', 'P', 'C', 'K', 'P', 'T', '1'};

struct Payload {
  std::vector<double> data;
  json entry(const std::string& name, const Matrix& m) {
    json e = {{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", data.size()}};
    data.insert(data.end(), m.data(), m.data() + m.size());
    return e;
  }
};

Matrix take(const std::vector<double>& data, const json& e, const std::string& path) {
  const auto rows = e.at("shape").at(0).get<Index>();
  const auto cols = e.at("shape").at(1).get<Index>();
  const auto offset = e.at("offset").get<std::size_t>();
  if (rows < 0 || cols < 0 || offset + static_cast<std::size_t>(rows * cols) > data.size()) {
    throw DataError(path + ": tensor '" + e.at("name").get<std::string>() + "' exceeds the payload");
  }
  Matrix m(rows, cols);
  std::memcpy(m.data(), data.data() + offset, sizeof(double) * static_cast<std::size_t>(rows * cols));
  return m;
}

}  // namespace

MipModel Checkpoint::restore() const { return MipModel(model, graph, features, steps, params); }

void save_checkpoint(const std::filesystem::path& path, const MipModel& model,
                     const Normalizer& normalizer, const std::string& run_config) {
  Payload payload;
  json tensors = json::array();
  for (const auto& [name, p] : model.params()) tensors.push_back(payload.entry(name, p.value));
  json header = {{"format", 1},
                 {"dtype", "float64"},
                 {"model", detail::to_json(model.config())},
                 {"features", model.features()},
                 {"steps", model.steps()},
                 {"nodes", model.nodes()},
                 {"tensors", tensors},
                 {"adjacency", payload.entry("adjacency", model.graph().adjacency())},
                 {"normalizer_mean", payload.entry("normalizer_mean", normalizer.mean)},
                 {"normalizer_scale", payload.entry("normalizer_scale", normalizer.scale)}};
  try {
    header["run_config"] = json::parse(run_config);
  } catch (const json::parse_error&) {
    throw ConfigError("run configuration passed to save_checkpoint is not JSON");
  }
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data.data()),
            static_cast<std::streamsize>(payload.data.size() * sizeof(double)));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + where);
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DataError(where + " is not a checkpoint (bad magic)");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1ULL << 32)) throw DataError(where + ": corrupt header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError(where + ": truncated header");

  const auto body_start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto body_bytes = static_cast<std::size_t>(in.tellg() - body_start);
  in.seekg(body_start);
  if (body_bytes % sizeof(double) != 0) throw DataError(where + ": payload is not a whole number of float64");
  std::vector<double> data(body_bytes / sizeof(double));
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(body_bytes));
  if (!in) throw DataError(where + ": truncated payload");

  Checkpoint ck;
  try {
    const json header = json::parse(text);
    if (header.at("format").get<int>() != 1) throw DataError(where + ": unsupported format version");
    if (header.at("dtype").get<std::string>() != "float64") throw DataError(where + ": unsupported dtype");
    ck.model = detail::model_config_from_json(header.at("model"), "checkpoint model");
    ck.features = header.at("features").get<Index>();
    ck.steps = header.at("steps").get<Index>();
    for (const json& e : header.at("tensors")) {
      ck.params.add(e.at("name").get<std::string>(), take(data, e, where));
    }
    ck.graph = GeoGraph(take(data, header.at("adjacency"), where));
    ck.normalizer.mean = take(data, header.at("normalizer_mean"), where).row(0);
    ck.normalizer.scale = take(data, header.at("normalizer_scale"), where).row(0);
    ck.run_config = header.value("run_config", json::object()).dump();
    if (header.at("nodes").get<Index>() != ck.graph.num_nodes()) {
      throw DataError(where + ": adjacency does not match the recorded node count");
    }
  } catch (const json::exception& e) {
    throw DataError(where + ": malformed header: " + e.what());
  }
  return ck;
}

}  // namespace mip
