#include "tbd/serialization.hpp"

#include <fstream>
#include <sstream>

namespace tbd::io {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "tbd-checkpoint";
constexpr const char* kScenesFormat = "tbd-scenes";
constexpr int kVersion = 1;

json grid_json(const Grid& g) {
  return {{"shape", {g.rows(), g.cols(), g.channels()}}, {"values", g.vector()}};
}

Grid grid_from(const json& doc, const std::string& what) {
  try {
    const auto shape = doc.at("shape").get<std::vector<int>>();
    if (shape.size() != 3) throw FormatError(what + ": shape must have three extents");
    for (int e : shape) {
      if (e < 1) throw FormatError(what + ": shape extents must be positive");
    }
    const auto values = doc.at("values").get<std::vector<double>>();
    const Shape s{shape[0], shape[1], shape[2]};
    if (values.size() != s.size()) {
      throw FormatError(what + ": " + std::to_string(values.size()) + " values for shape " + s.str());
    }
    return Grid::from(s, values);
  } catch (const json::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
}

void expect_header(const json& doc, const char* format) {
  if (!doc.is_object() || !doc.contains("format") || doc["format"] != format) {
    throw FormatError(std::string("not a ") + format + " document");
  }
  if (!doc.contains("version") || doc["version"] != kVersion) {
    throw FormatError(std::string(format) + ": unsupported version");
  }
}

}  // namespace

json to_json(const ParameterSet& params) {
  json tensors = json::array();
  for (const auto& [name, g] : params.entries()) {
    json t = grid_json(g);
    t["name"] = name;
    tensors.push_back(std::move(t));
  }
  return tensors;
}

ParameterSet parameters_from_json(const json& doc) {
  if (!doc.is_array()) throw FormatError("tensors must be an array");
  ParameterSet p;
  for (const auto& t : doc) {
    if (!t.is_object() || !t.contains("name") || !t["name"].is_string()) {
      throw FormatError("tensor entry without a name");
    }
    const std::string name = t["name"].get<std::string>();
    if (p.contains(name)) throw FormatError("duplicate tensor '" + name + "'");
    p.add(name, grid_from(t, "tensor '" + name + "'"));
  }
  return p;
}

json to_json(const toy::DetectorNet& net) {
  const auto& c = net.config();
  return {{"format", kCheckpointFormat},
          {"version", kVersion},
          {"detector",
           {{"classes", c.classes},
            {"width", c.width},
            {"context_radius", c.context_radius},
            {"extent", c.extent},
            {"stride", c.stride}}},
          {"tensors", to_json(net.parameters())}};
}

toy::DetectorNet detector_from_json(const json& doc) {
  expect_header(doc, kCheckpointFormat);
  toy::DetectorConfig c;
  try {
    const auto& d = doc.at("detector");
    c.classes = d.at("classes").get<int>();
    c.width = d.at("width").get<int>();
    c.context_radius = d.at("context_radius").get<int>();
    c.extent = d.at("extent").get<double>();
    c.stride = d.at("stride").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint detector section: ") + e.what());
  }
  if (!doc.contains("tensors")) throw FormatError("checkpoint without tensors");
  try {
    return toy::DetectorNet(c, parameters_from_json(doc["tensors"]));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

json to_json(const std::vector<toy::SyntheticScene>& scenes) {
  json list = json::array();
  for (const auto& s : scenes) {
    json objects = json::array();
    for (const auto& gt : s.truth.objects) {
      objects.push_back({{"box", {gt.box.x1, gt.box.y1, gt.box.x2, gt.box.y2}}, {"label", gt.label}});
    }
    list.push_back({{"seed", s.seed}, {"input", grid_json(s.input)}, {"objects", std::move(objects)}});
  }
  return {{"format", kScenesFormat}, {"version", kVersion}, {"scenes", std::move(list)}};
}

std::vector<toy::SyntheticScene> scenes_from_json(const json& doc) {
  expect_header(doc, kScenesFormat);
  std::vector<toy::SyntheticScene> out;
  try {
    for (const auto& s : doc.at("scenes")) {
      toy::SyntheticScene scene;
      scene.seed = s.at("seed").get<std::uint64_t>();
      scene.input = grid_from(s.at("input"), "scene input");
      for (const auto& o : s.at("objects")) {
        const auto b = o.at("box").get<std::vector<double>>();
        if (b.size() != 4) throw FormatError("scene object box must have four coordinates");
        scene.truth.objects.push_back({{b[0], b[1], b[2], b[3]}, o.at("label").get<int>()});
      }
      try {
        scene.truth.validate(scene.input.channels());
      } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("scene objects: ") + e.what());
      }
      out.push_back(std::move(scene));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("scenes: ") + e.what());
  }
  return out;
}

void write_json(const std::filesystem::path& path, const json& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << doc.dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const toy::DetectorNet& net) { write_json(path, to_json(net)); }

toy::DetectorNet load_checkpoint(const std::filesystem::path& path) {
  try {
    return detector_from_json(read_json(path));
  } catch (const FormatError& e) {
    throw FormatError("corrupt checkpoint '" + path.string() + "': " + e.what());
  }
}

void save_scenes(const std::filesystem::path& path, const std::vector<toy::SyntheticScene>& scenes) {
  write_json(path, to_json(scenes));
}

std::vector<toy::SyntheticScene> load_scenes(const std::filesystem::path& path) {
  try {
    return scenes_from_json(read_json(path));
  } catch (const FormatError& e) {
    throw FormatError("corrupt scene file '" + path.string() + "': " + e.what());
  }
}

}  // namespace tbd::io
