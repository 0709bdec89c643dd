#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "forcelr/force.hpp"
#include "forcelr/verify.hpp"

using forcelr::PropertyResult;
using forcelr::VerifyOptions;

namespace {

const PropertyResult& find(const std::vector<PropertyResult>& results,
                           const std::string& name) {
  for (const auto& r : results)
    if (r.name == name) return r;
  throw std::logic_error("no property named " + name);
}

}  // namespace

TEST(PropertySuite, AllChecksPassOnTheRealImplementation) {
  const std::vector<PropertyResult> results = forcelr::run_property_suite();
  ASSERT_EQ(results.size(), 9u);
  for (const auto& r : results)
    EXPECT_TRUE(r.pass) << r.name << " worst=" << r.worst << " limit=" << r.limit;
}

TEST(PropertySuite, DeterministicUnderTheDefaultSeed) {
  const auto a = forcelr::run_property_suite();
  const auto b = forcelr::run_property_suite();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].worst, b[i].worst);
  }
}

TEST(PropertySuite, SignCorruptedForceIsCaught) {
  // negative control: flipping the force's sign must break the direction
  // check (cosine -1) and the scaled-identity check, while leaving the
  // force-independent properties untouched
  VerifyOptions opt;
  opt.force_fn = [](const forcelr::FilterMatrix& fm, const forcelr::ForceConfig& cfg) {
    forcelr::Mat delta = forcelr::force_gradient(fm, cfg).delta;
    for (double& v : delta.a) v = -v;
    return delta;
  };
  const auto results = forcelr::run_property_suite(opt);
  EXPECT_FALSE(find(results, "scaled-gradient-identity-l2").pass);
  const auto& direction = find(results, "unit-force-direction-cosine");
  EXPECT_FALSE(direction.pass);
  EXPECT_NEAR(direction.worst, -1.0, 1e-9);
  EXPECT_TRUE(find(results, "perpendicularity").pass);
  EXPECT_TRUE(find(results, "pca-tail-identity").pass);
}

TEST(PropertySuite, ReportSerializesEveryField) {
  const auto results = forcelr::run_property_suite();
  const nlohmann::json j = forcelr::to_json(results);
  ASSERT_EQ(j.size(), results.size());
  for (const auto& entry : j) {
    EXPECT_TRUE(entry.contains("name"));
    EXPECT_TRUE(entry.contains("pass"));
    EXPECT_TRUE(entry.contains("worst"));
    EXPECT_TRUE(entry.contains("limit"));
  }
  EXPECT_TRUE(forcelr::all_pass(results));
}
