#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "tbd/serialization.hpp"

using namespace tbd;

namespace {

std::filesystem::path scratch(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("tbd_io_" + name);
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  toy::DetectorConfig cfg;
  cfg.width = 5;
  const auto net = toy::DetectorNet::create(cfg, 77);
  const auto path = scratch("net.json");
  io::save_checkpoint(path, net);
  const auto back = io::load_checkpoint(path);
  EXPECT_TRUE(back == net);
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto path = scratch("bad.json");
  auto expect_bad = [&](const std::string& text) {
    std::ofstream(path, std::ios::trunc) << text;
    EXPECT_THROW(io::load_checkpoint(path), io::FormatError) << text;
  };
  expect_bad("{not json");
  expect_bad("{}");
  expect_bad(R"({"format":"tbd-scenes","version":1})");
  expect_bad(R"({"format":"tbd-checkpoint","version":9})");

  const auto good = io::to_json(toy::DetectorNet::create(toy::DetectorConfig{}, 1));
  auto truncated = good;
  truncated["tensors"][0]["values"].erase(truncated["tensors"][0]["values"].begin());
  expect_bad(truncated.dump());
  auto missing = good;
  missing["tensors"].erase(missing["tensors"].begin() + 2);
  expect_bad(missing.dump());
  auto wrong_type = good;
  wrong_type["detector"]["width"] = "wide";
  expect_bad(wrong_type.dump());

  EXPECT_THROW(io::load_checkpoint(scratch("does_not_exist.json")), io::FormatError);
  std::filesystem::remove(path);
}

TEST(Scenes, RoundTripIsExact) {
  const auto scenes = toy::generate_dataset(toy::ScenarioSpec{}, 4, 3);
  const auto path = scratch("scenes.json");
  io::save_scenes(path, scenes);
  const auto back = io::load_scenes(path);
  ASSERT_EQ(back.size(), scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    EXPECT_EQ(back[i].seed, scenes[i].seed);
    EXPECT_EQ(back[i].input, scenes[i].input);
    ASSERT_EQ(back[i].truth.size(), scenes[i].truth.size());
    for (std::size_t k = 0; k < scenes[i].truth.size(); ++k) {
      EXPECT_EQ(back[i].truth.objects[k].box, scenes[i].truth.objects[k].box);
      EXPECT_EQ(back[i].truth.objects[k].label, scenes[i].truth.objects[k].label);
    }
  }
  std::filesystem::remove(path);
}

TEST(Scenes, InvalidLabelsAreRejected) {
  auto doc = io::to_json(toy::generate_dataset(toy::ScenarioSpec{}, 4, 1));
  doc["scenes"][0]["objects"][0]["label"] = 7;
  EXPECT_THROW(io::scenes_from_json(doc), io::FormatError);
}
