#include <gtest/gtest.h>

#include <set>

#include "causalfm/query.hpp"

using namespace causalfm;
using namespace causalfm::query;

namespace {

const corpus::BenchmarkDataset& dataset(std::string_view id) {
  static std::map<std::string, corpus::BenchmarkDataset, std::less<>> cache;
  auto it = cache.find(id);
  if (it == cache.end()) it = cache.emplace(std::string(id), corpus::load_bundled_dataset(default_data_dir(), id)).first;
  return it->second;
}

}  // namespace

TEST(Templates, FlagsOfTheFiveWordings) {
  const auto& ts = bundled_templates();
  ASSERT_EQ(ts.size(), 5u);
  int symmetric = 0;
  for (const auto& t : ts) {
    if (t.symmetry == Symmetry::symmetric) ++symmetric;
    EXPECT_EQ(t.causal_explicit, t.id != "does-influence") << t.id;
  }
  EXPECT_EQ(symmetric, 3);
  EXPECT_EQ(find_template("does-influence").symmetry, Symmetry::asymmetric);
}

TEST(Templates, RenderInsertsSlotsVerbatim) {
  EXPECT_EQ(find_template("does-cause").render("smoking", "cancer"), "Does smoking cause cancer?");
  EXPECT_EQ(find_template("causally-related").render("driving speed", "fuel consumption"),
            "Are driving speed and fuel consumption causally related?");
}

TEST(Templates, LeadingSlotIsCapitalised) {
  auto t = make_template("lead", "{X} causes {Y}. True?", Symmetry::asymmetric);
  EXPECT_TRUE(t.causal_explicit);
  EXPECT_EQ(t.render("a burglary", "the alarm"), "A burglary causes the alarm. True?");
  auto u = make_template("second", "Think about {Y}. {X} comes first?", Symmetry::asymmetric);
  EXPECT_EQ(u.render("a burglary", "the alarm"), "Think about the alarm. A burglary comes first?");
}

TEST(Templates, SlotsMustAppearOnce) {
  EXPECT_THROW(make_template("x", "Does {X} cause it?", Symmetry::asymmetric), std::invalid_argument);
  EXPECT_THROW(make_template("x", "{X} {X} {Y}", Symmetry::asymmetric), std::invalid_argument);
  EXPECT_FALSE(make_template("x", "Does {X} affect {Y}?", Symmetry::asymmetric).causal_explicit);
}

TEST(Templates, SelectionKeepsBundledOrder) {
  auto ts = select_templates({"does-influence", "causally-related"});
  ASSERT_EQ(ts.size(), 2u);
  EXPECT_EQ(ts[0].id, "causally-related");
  EXPECT_THROW(select_templates({"nope"}), ConfigError);
}

TEST(RenderAll, CountsMatchPairsTimesTemplates) {
  for (auto id : corpus::kBundledIds) {
    const auto& ds = dataset(id);
    auto prompts = render_all(ds, bundled_templates());
    EXPECT_EQ(prompts.size(), corpus::expected_prompt_count(ds, 5)) << id;
    std::set<std::string> ids, texts;
    for (const auto& p : prompts) {
      ids.insert(p.id);
      texts.insert(p.text);
      ASSERT_TRUE(p.pair);
      EXPECT_NE(p.pair->first, p.pair->second);
    }
    EXPECT_EQ(ids.size(), prompts.size());
    EXPECT_EQ(texts.size(), prompts.size());
  }
}

TEST(RenderAll, OrderIsPairMajorThenTemplate) {
  auto prompts = render_all(dataset("A"), bundled_templates());
  ASSERT_EQ(prompts.size(), 10u);
  EXPECT_EQ(prompts[0].text, "Are altitude and temperature causally related?");
  EXPECT_EQ(prompts[3].text, "Does altitude cause temperature?");
  EXPECT_EQ(prompts[5].pair->first, "temperature");
  EXPECT_EQ(prompts[9].text, "Does temperature influence altitude?");
  EXPECT_EQ(prompts[9].id, "A/does-influence/temperature->altitude");
}

TEST(RenderAll, IsDeterministic) {
  EXPECT_EQ(render_all(dataset("E"), bundled_templates()), render_all(dataset("E"), bundled_templates()));
}

TEST(RenderAll, PerturbationReplacesDisplayName) {
  RenderOptions opts;
  opts.perturbations = {{"mobility", "fitness"}};
  auto prompts = render_all(dataset("H"), bundled_templates(), opts);
  EXPECT_EQ(prompts.size(), 60u);
  std::size_t with_fitness = 0;
  for (const auto& p : prompts) {
    EXPECT_EQ(p.text.find("mobility"), std::string::npos) << p.text;
    if (p.text.find("fitness") != std::string::npos) ++with_fitness;
    EXPECT_EQ(p.perturbation, (std::vector<Substitution>{{"mobility", "fitness"}}));
    EXPECT_TRUE(p.id.ends_with("[mobility=fitness]"));
  }
  EXPECT_EQ(with_fitness, 30u);
}

TEST(RenderAll, PerturbationOfUnknownVariableIsConfigError) {
  RenderOptions opts;
  opts.perturbations = {{"weather", "rain"}};
  EXPECT_THROW(render_all(dataset("H"), bundled_templates(), opts), ConfigError);
}

TEST(RenderAll, SuffixIsAppended) {
  RenderOptions opts;
  opts.suffix = "Answer with yes or no.";
  auto prompts = render_all(dataset("A"), select_templates({"does-cause"}), opts);
  ASSERT_EQ(prompts.size(), 2u);
  EXPECT_EQ(prompts[0].text, "Does altitude cause temperature? Answer with yes or no.");
  EXPECT_EQ(prompts[0].suffix, opts.suffix);
}

TEST(Suites, BundledSuitesLoad) {
  auto ar = load_suite(default_data_dir() / "suites" / "ar.suite");
  auto ip = load_suite(default_data_dir() / "suites" / "ip.suite");
  EXPECT_EQ(ar.size(), 15u);
  EXPECT_EQ(ip.size(), 36u);
  EXPECT_EQ(ar[0].id, "ar01");
  auto prompts = render_suite("ar", ar);
  EXPECT_EQ(prompts[14].id, "ar/ar15");
  EXPECT_EQ(prompts[14].text, ar[14].text);
  EXPECT_FALSE(prompts[0].pair);
}

TEST(Suites, EmptySuiteIsRejected) {
  EXPECT_THROW(render_suite("x", {}), std::invalid_argument);
}

TEST(Suites, FormatRoundTrips) {
  auto text = read_file(default_data_dir() / "suites" / "ip.suite");
  EXPECT_EQ(format_suite(parse_suite(text)), text);
  EXPECT_THROW(parse_suite("q1\tA?\nq1\tB?\n"), ParseError);
  EXPECT_THROW(parse_suite("no tab here\n"), ParseError);
}
