#include <gtest/gtest.h>

#include <fstream>

#include "paracosm/datasets.hpp"
#include "test_support.hpp"

using namespace paracosm;
using nlohmann::json;
using paracosm::testing::TempDir;

namespace {

void write_json(const std::filesystem::path& p, const json& j) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p) << j.dump(1);
}

template <typename F>
std::string schema_message(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::SchemaError) return e.what();
    return "wrong kind: " + std::string(e.what());
  }
  return "no error";
}

json cirr_caption(const std::string& pair, const std::string& ref, const std::string& target,
                  std::vector<std::string> members) {
  return {{"pairid", std::stoi(pair)}, {"reference", ref}, {"target_hard", target},
          {"caption", "make it " + pair}, {"img_set", {{"id", 1}, {"members", members}}}};
}

void cirr_fixture(const std::filesystem::path& root, const json& caps, const std::string& split = "val") {
  json splits = json::object();
  for (const char* id : {"a", "b", "c", "d", "e", "f", "g"}) splits[id] = std::string("./dev/") + id + ".png";
  write_json(root / "image_splits" / ("split.rc2." + split + ".json"), splits);
  write_json(root / "captions" / ("cap.rc2." + split + ".json"), caps);
}

void circo_fixture(const std::filesystem::path& root, const json& anns, const std::string& split = "val") {
  json images = json::array();
  for (int id : {10, 11, 12, 13, 14}) images.push_back({{"id", id}, {"file_name", std::to_string(id) + ".jpg"}});
  write_json(root / "COCO2017_unlabeled" / "annotations" / "image_info_unlabeled2017.json", {{"images", images}});
  write_json(root / "annotations" / (split + ".json"), anns);
}

void fiq_fixture(const std::filesystem::path& root, const json& caps) {
  write_json(root / "image_splits" / "split.dress.val.json", json{"d1", "d2", "d3"});
  write_json(root / "captions" / "cap.dress.val.json", caps);
}

}  // namespace

TEST(Cirr, LoadsRecordsAndDropsReferenceFromSubset) {
  TempDir dir;
  cirr_fixture(dir.path(), json{cirr_caption("1", "a", "b", {"a", "b", "c", "d", "e", "f"}),
                                cirr_caption("2", "c", "g", {"c", "g", "a", "b", "d", "e"})});
  auto ds = load_cirr(dir.path(), "val");
  ASSERT_EQ(ds.records.size(), 2u);
  EXPECT_EQ(ds.gallery_ids.size(), 7u);
  const auto& r = ds.records[0];
  EXPECT_EQ(r.query_id, "1");
  EXPECT_EQ(r.reference_image_id, "a");
  EXPECT_EQ(r.gt_target_ids, std::vector<std::string>{"b"});
  EXPECT_EQ(*r.subset_ids, (std::vector<std::string>{"b", "c", "d", "e", "f"}));
  EXPECT_EQ(ds.image_paths.at("a"), (dir.path() / "dev" / "a.png").lexically_normal().string());
}

TEST(Cirr, SubsetMissingTargetIsSchemaError) {
  TempDir dir;
  cirr_fixture(dir.path(), json{cirr_caption("1", "a", "g", {"a", "b", "c", "d", "e", "f"})});
  auto msg = schema_message([&] { load_cirr(dir.path(), "val"); });
  EXPECT_NE(msg.find("subset_ids"), std::string::npos) << msg;
}

TEST(Cirr, EmptyAndMalformedFiles) {
  TempDir dir;
  cirr_fixture(dir.path(), json::array());
  EXPECT_NE(schema_message([&] { load_cirr(dir.path(), "val"); }).find("no records"), std::string::npos);
  std::ofstream(dir.path() / "captions" / "cap.rc2.val.json") << "";
  EXPECT_NE(schema_message([&] { load_cirr(dir.path(), "val"); }).find("cap.rc2.val.json"), std::string::npos);
  EXPECT_NE(schema_message([&] { load_cirr(dir.path(), "nosuchsplit"); }), "no error");
}

TEST(Cirr, FieldErrorsNameTheField) {
  TempDir dir;
  auto bad = cirr_caption("1", "a", "b", {"a", "b"});
  bad.erase("caption");
  cirr_fixture(dir.path(), json{bad});
  EXPECT_NE(schema_message([&] { load_cirr(dir.path(), "val"); }).find("[0].caption"), std::string::npos);
  auto unknown = cirr_caption("1", "a", "zz", {"a", "zz"});
  cirr_fixture(dir.path(), json{unknown});
  EXPECT_NE(schema_message([&] { load_cirr(dir.path(), "val"); }).find("not in gallery"), std::string::npos);
  auto self = cirr_caption("1", "a", "a", {"a", "b"});
  cirr_fixture(dir.path(), json{self});
  EXPECT_NE(schema_message([&] { load_cirr(dir.path(), "val"); }).find("reference"), std::string::npos);
}

TEST(Cirr, HiddenLabelSplitLoadsWithoutTargets) {
  TempDir dir;
  auto c = cirr_caption("1", "a", "b", {"a", "b", "c"});
  c.erase("target_hard");
  cirr_fixture(dir.path(), json{c}, "test1");
  auto ds = load_cirr(dir.path(), "test1");
  ASSERT_EQ(ds.records.size(), 1u);
  EXPECT_TRUE(ds.records[0].gt_target_ids.empty());
}

TEST(Circo, MultiTargetAndSharedConcept) {
  TempDir dir;
  circo_fixture(dir.path(), json{{{"id", 0}, {"reference_img_id", 10}, {"target_img_id", 11},
                                  {"relative_caption", "is on a table"}, {"shared_concept", "a cup"},
                                  {"gt_img_ids", {11, 12, 14}}}});
  auto ds = load_circo(dir.path(), "val");
  ASSERT_EQ(ds.records.size(), 1u);
  const auto& r = ds.records[0];
  EXPECT_EQ(r.gt_target_ids, (std::vector<std::string>{"11", "12", "14"}));
  EXPECT_EQ(*r.shared_concept, "a cup");
  EXPECT_EQ(ds.gallery_ids.size(), 5u);
  EXPECT_EQ(QueryRecord::from_json(r.to_json()), r);
}

TEST(Circo, MissingSharedConcept) {
  TempDir dir;
  circo_fixture(dir.path(), json{{{"id", 0}, {"reference_img_id", 10}, {"relative_caption", "x"},
                                  {"gt_img_ids", {11}}}});
  EXPECT_NE(schema_message([&] { load_circo(dir.path(), "val"); }).find("shared_concept"), std::string::npos);
}

TEST(FashionIq, JoinsTwoCaptions) {
  TempDir dir;
  fiq_fixture(dir.path(), json{{{"candidate", "d1"}, {"target", "d2"}, {"captions", {"is red", "has no sleeves"}}}});
  auto ds = load_fashioniq(dir.path(), "dress");
  ASSERT_EQ(ds.records.size(), 1u);
  EXPECT_EQ(ds.records[0].modification_text, "is red and has no sleeves");
  EXPECT_EQ(*ds.records[0].category, "dress");
  EXPECT_EQ(ds.image_paths.at("d1"), (dir.path() / "images" / "d1.png").string());
}

TEST(FashionIq, SingleCaptionRejected) {
  TempDir dir;
  fiq_fixture(dir.path(), json{{{"candidate", "d1"}, {"target", "d2"}, {"captions", {"is red"}}}});
  EXPECT_NE(schema_message([&] { load_fashioniq(dir.path(), "dress"); }).find("captions"), std::string::npos);
}

TEST(PublishedSizes, EvaluationSplits) {
  EXPECT_EQ(published_split_size(DatasetKind::Cirr, "test1")->queries, 4148u);
  EXPECT_EQ(published_split_size(DatasetKind::Cirr, "test1")->gallery, 2315u);
  EXPECT_EQ(published_split_size(DatasetKind::Circo, "test")->queries, 800u);
  EXPECT_EQ(published_split_size(DatasetKind::Circo, "test")->gallery, 123403u);
  EXPECT_EQ(published_split_size(DatasetKind::FashionIQ, "val", "shirt")->queries, 2038u);
  EXPECT_EQ(published_split_size(DatasetKind::FashionIQ, "val", "shirt")->gallery, 6346u);
  EXPECT_EQ(published_split_size(DatasetKind::FashionIQ, "val", "dress")->queries, 2017u);
  EXPECT_EQ(published_split_size(DatasetKind::FashionIQ, "val", "dress")->gallery, 3817u);
  EXPECT_FALSE(published_split_size(DatasetKind::Generic, "val"));
}

TEST(JsonLines, RoundTrip) {
  TempDir dir;
  std::vector<QueryRecord> records(2);
  records[0] = {"q1", "r1", "make it blue", std::nullopt, {"t1"}, std::vector<std::string>{"t1", "x"}, std::nullopt};
  records[1] = {"q2", "r2", "is smaller", std::string("a dog"), {"t2", "t3"}, std::nullopt, std::string("shirt")};
  write_records_jsonl(dir / "q.jsonl", records);
  EXPECT_EQ(read_records_jsonl(dir / "q.jsonl"), records);
  std::ofstream(dir / "bad.jsonl") << "{\"query_id\": 1}\n";
  EXPECT_THROW(read_records_jsonl(dir / "bad.jsonl"), Error);
}
