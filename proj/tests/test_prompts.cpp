#include <gtest/gtest.h>

#include <fstream>

#include "paracosm/prompts.hpp"
#include "test_support.hpp"

using namespace paracosm;

namespace {

PromptLibrary shipped() { return PromptLibrary::load(PARACOSM_SOURCE_DIR "/templates"); }

void write(const std::filesystem::path& p, const std::string& body) { std::ofstream(p) << body; }

}  // namespace

TEST(Prompts, CirrSubstitutesModificationVerbatim) {
  auto lib = shipped();
  auto text = lib.render_query_edit(DatasetKind::Cirr, "make the dog run");
  EXPECT_NE(text.find("make the dog run"), std::string::npos);
  EXPECT_EQ(text.find('{'), std::string::npos);
  EXPECT_EQ(text, lib.render_query_edit("cirr", "make the dog run"));
}

TEST(Prompts, CircoBindsBothPlaceholders) {
  auto lib = shipped();
  auto text = lib.render_query_edit(DatasetKind::Circo, "is at the beach", std::string("a red umbrella"));
  EXPECT_NE(text.find("is at the beach"), std::string::npos);
  EXPECT_NE(text.find("a red umbrella"), std::string::npos);
  EXPECT_EQ(text.find('{'), std::string::npos);
}

TEST(Prompts, CircoWithoutSharedConcept) {
  auto lib = shipped();
  try {
    lib.render_query_edit(DatasetKind::Circo, "is at the beach");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingSharedConcept);
  }
}

TEST(Prompts, UnknownDatasetAndEmptyText) {
  auto lib = shipped();
  try {
    lib.render_query_edit("imagenet", "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownDataset);
  }
  EXPECT_THROW(lib.render_query_edit(DatasetKind::Generic, ""), Error);
}

TEST(Prompts, CaptionTemplatesAreFixedAndDescriptive) {
  auto lib = shipped();
  auto brief = lib.render_brief_caption();
  EXPECT_FALSE(brief.empty());
  EXPECT_EQ(brief, lib.render_brief_caption());
  EXPECT_NE(brief.find("single sentence"), std::string::npos);
  auto detailed = lib.render_detailed_caption();
  EXPECT_FALSE(detailed.empty());
  EXPECT_EQ(detailed, lib.render_detailed_caption());
  for (const char* needle : {"objects", "attributes", "spatial relationships"})
    EXPECT_NE(detailed.find(needle), std::string::npos) << needle;
}

TEST(Prompts, EveryKindRendersWithoutLeftoverPlaceholders) {
  auto lib = shipped();
  for (auto kind : {DatasetKind::Generic, DatasetKind::Cirr, DatasetKind::Circo, DatasetKind::FashionIQ}) {
    auto text = lib.render_query_edit(kind, "is blue and has long sleeves", std::string("a shirt"));
    EXPECT_EQ(text.find('{'), std::string::npos) << to_string(kind);
    EXPECT_NE(text.find("is blue and has long sleeves"), std::string::npos);
  }
}

TEST(Prompts, UnboundPlaceholderIsAnError) {
  paracosm::testing::TempDir dir;
  write(dir / "generic.query_edit.txt", "Change {modification_text} near {landmark}.\n");
  write(dir / "generic.brief_caption.txt", "brief\n");
  write(dir / "generic.detailed_caption.txt", "detailed\n");
  auto lib = PromptLibrary::load(dir.path());
  try {
    lib.render_query_edit(DatasetKind::Generic, "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnboundPlaceholder);
  }
}

TEST(Prompts, MissingGenericTemplateRejected) {
  paracosm::testing::TempDir dir;
  write(dir / "generic.query_edit.txt", "{modification_text}");
  EXPECT_THROW(PromptLibrary::load(dir.path()), Error);
}

TEST(Prompts, FallbackToGenericAndDigestsTrackWording) {
  paracosm::testing::TempDir dir;
  write(dir / "generic.query_edit.txt", "Do: {modification_text}\n");
  write(dir / "generic.brief_caption.txt", "brief\n");
  write(dir / "generic.detailed_caption.txt", "detailed\n");
  auto a = PromptLibrary::load(dir.path());
  EXPECT_EQ(a.render_query_edit(DatasetKind::FashionIQ, "x"), "Do: x");
  EXPECT_EQ(a.digests().size(), 3u);
  write(dir / "generic.brief_caption.txt", "brief!\n");
  auto b = PromptLibrary::load(dir.path());
  EXPECT_NE(a.combined_digest(), b.combined_digest());
  EXPECT_EQ(a.digests().at("generic.query_edit"), b.digests().at("generic.query_edit"));
}
