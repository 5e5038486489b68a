#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"

#include "starbell/catalogue.hpp"

using namespace starbell;

namespace {

const SiteLayout kSites{
    {"A", 48.21645, 16.354311, 215.0},
    {"B", 48.23160, 16.3579553, 200.0},
    {"S", 48.221311, 16.356439, 205.0},
};
const UtcTime kRun1Start{2016, 4, 21, 21, 23, 0.0};

const char* kHeader = "hip,ra_deg,dec_deg,plx_mas,e_plx_mas,hp_mag\n";

SelectionCriteria run1_alice_criteria()
{
    SelectionCriteria criteria;
    criteria.magnitude_min = 4.8;  // the observed star sits just below 5
    criteria.window = {189.0, 209.0, 27.0, 47.0};
    return criteria;
}

std::vector<CatalogueRecord> fixture_records()
{
    std::ifstream in(std::string(STARBELL_DATA_DIR) + "/catalogue/hipparcos_subset.csv");
    REQUIRE(in.good());
    return parse_catalogue(in).records;
}

}  // namespace

TEST_CASE("catalogue rows parse into records with derived distances")
{
    std::istringstream in(std::string(kHeader) + "56127,172.5787,-3.0035,5.40,0.31,4.8877\n");
    const CatalogueParseResult result = parse_catalogue(in);
    REQUIRE(result.records.size() == 1);
    const CatalogueRecord& rec = result.records.front();
    CHECK(rec.hip_id == "56127");
    const DistanceEstimate d = parallax_to_distance(rec.parallax_mas, rec.parallax_error_mas);
    CHECK(d.distance_ly == doctest::Approx(603.9).epsilon(1e-3));
    CHECK(result.diagnostics.empty());
}

TEST_CASE("nonpositive parallax is rejected, not fixed")
{
    const std::string body = std::string(kHeader) + "123,10.0,5.0,0.0,0.1,6.0\n";
    {
        std::istringstream in(body);
        CHECK_THROWS_WITH_AS(parse_catalogue(in), doctest::Contains("nonpositive parallax"),
                             CatalogueFormatError);
    }
    {
        std::istringstream in(body);
        const CatalogueParseResult result = parse_catalogue(in, true);
        CHECK(result.records.empty());
        REQUIRE(result.diagnostics.size() == 1);
        CHECK(result.diagnostics.front().find("line 2") != std::string::npos);
    }
}

TEST_CASE("empty catalogue with a valid header parses to an empty list")
{
    std::istringstream in(kHeader);
    CHECK(parse_catalogue(in).records.empty());
}

TEST_CASE("missing columns are a hard error even in lenient mode")
{
    std::istringstream in("hip,ra_deg,dec_deg,plx_mas,e_plx_mas\n1,2,3,4,5\n");
    CHECK_THROWS_WITH_AS(parse_catalogue(in, true), doctest::Contains("hp_mag"),
                         CatalogueFormatError);
}

TEST_CASE("malformed rows carry their line numbers")
{
    std::istringstream in(std::string(kHeader) +
                          "1,10.0,5.0,2.0,0.1,6.0\n"
                          "2,not_a_number,5.0,2.0,0.1,6.0\n"
                          "3,10.0,5.0,2.0,0.1,6.0\n");
    const CatalogueParseResult result = parse_catalogue(in, true);
    CHECK(result.records.size() == 2);
    REQUIRE(result.diagnostics.size() == 1);
    CHECK(result.diagnostics.front().find("line 3") != std::string::npos);
}

TEST_CASE("parallax to distance")
{
    CHECK(parallax_to_distance(3.2616, 0.0).distance_ly == doctest::Approx(1000.0));
    const DistanceEstimate d1 = parallax_to_distance(5.40, 0.31);
    CHECK(d1.distance_ly == doctest::Approx(604.0).epsilon(0.001));
    CHECK(d1.error_ly == doctest::Approx(34.7).epsilon(0.01));
    const DistanceEstimate d2 = parallax_to_distance(0.90, 0.34);
    CHECK(d2.distance_ly == doctest::Approx(3624.0).epsilon(0.001));
    CHECK(d2.error_ly == doctest::Approx(1369.0).epsilon(0.001));
    CHECK_THROWS_AS(parallax_to_distance(0.0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(parallax_to_distance(-1.0, 0.1), std::invalid_argument);
}

TEST_CASE("the observed star passes the run-1 window and bad candidates fail")
{
    const auto records = fixture_records();
    const auto candidates = select_candidates(records, run1_alice_criteria(), kSites, Side::A,
                                              TimingBudget{}, kRun1Start, 179.0);

    const auto has = [&](const std::string& hip) {
        return std::any_of(candidates.begin(), candidates.end(),
                           [&](const RankedCandidate& c) { return c.record.hip_id == hip; });
    };
    CHECK(has("56127"));   // the observed star
    CHECK(has("91001"));   // valid decoy in the same window
    CHECK(!has("91002"));  // 272 ly, closer than the distance floor
    CHECK(!has("91003"));  // 58% fractional distance error
    CHECK(!has("91004"));  // brighter than the magnitude range
    CHECK(!has("91007"));  // below the horizon
    CHECK(!has("105259A"));  // wrong window (Bob's star)
}

TEST_CASE("magnitude bounds reject saturating and faint stars under defaults")
{
    std::vector<CatalogueRecord> records = fixture_records();
    SelectionCriteria defaults;  // magnitude range [5, 9]
    defaults.window = {189.0, 209.0, 27.0, 47.0};
    const auto candidates = select_candidates(records, defaults, kSites, Side::A,
                                              TimingBudget{}, kRun1Start, 179.0);
    for (const RankedCandidate& c : candidates) {
        CHECK(c.record.hp_magnitude >= 5.0);
        CHECK(c.record.hp_magnitude <= 9.0);
    }
    // a 4.0-magnitude star is rejected by the default range
    const bool bright_present = std::any_of(
        candidates.begin(), candidates.end(),
        [](const RankedCandidate& c) { return c.record.hip_id == "91004"; });
    CHECK(!bright_present);
}

TEST_CASE("every selected candidate satisfies all criteria simultaneously")
{
    // Property test over a randomized catalogue.
    std::mt19937_64 rng(20160421);
    std::uniform_real_distribution<double> ra(150.0, 195.0);
    std::uniform_real_distribution<double> dec(-25.0, 15.0);
    std::uniform_real_distribution<double> plx(0.5, 12.0);
    std::uniform_real_distribution<double> err(0.0, 1.0);
    std::uniform_real_distribution<double> mag(3.0, 11.0);

    std::vector<CatalogueRecord> records;
    for (int k = 0; k < 300; ++k)
        records.push_back({"R" + std::to_string(k), ra(rng), dec(rng), plx(rng),
                           err(rng), mag(rng)});

    const SelectionCriteria criteria = run1_alice_criteria();
    const auto candidates = select_candidates(records, criteria, kSites, Side::A,
                                              TimingBudget{}, kRun1Start, 179.0);
    for (const RankedCandidate& c : candidates) {
        CHECK(c.target.distance_ly >= criteria.min_distance_ly);
        CHECK(c.target.distance_error_ly <=
              criteria.max_fractional_distance_error * c.target.distance_ly);
        CHECK(c.record.hp_magnitude >= criteria.magnitude_min);
        CHECK(c.record.hp_magnitude <= criteria.magnitude_max);
        CHECK(c.visibility_duration_s == doctest::Approx(179.0));
        CHECK(c.score >= 0.0);
        CHECK(c.score <= 1.0);
    }
}

TEST_CASE("selection is idempotent")
{
    const auto records = fixture_records();
    const SelectionCriteria criteria = run1_alice_criteria();
    const auto first = select_candidates(records, criteria, kSites, Side::A, TimingBudget{},
                                         kRun1Start, 179.0);
    std::vector<CatalogueRecord> surviving;
    for (const RankedCandidate& c : first) surviving.push_back(c.record);
    const auto second = select_candidates(surviving, criteria, kSites, Side::A, TimingBudget{},
                                          kRun1Start, 179.0);
    REQUIRE(first.size() == second.size());
    for (std::size_t k = 0; k < first.size(); ++k)
        CHECK(first[k].record.hip_id == second[k].record.hip_id);
}

TEST_CASE("pair ranking is a deterministic total order")
{
    const auto records = fixture_records();
    SelectionCriteria bob_criteria;
    bob_criteria.magnitude_min = 4.8;
    bob_criteria.window = {15.0, 35.0, 14.0, 34.0};

    auto a = select_candidates(records, run1_alice_criteria(), kSites, Side::A, TimingBudget{},
                               kRun1Start, 179.0);
    auto b = select_candidates(records, bob_criteria, kSites, Side::B, TimingBudget{},
                               kRun1Start, 179.0);
    REQUIRE(!a.empty());
    REQUIRE(!b.empty());

    const PairRanking ranking = rank_pairs(a, b);
    CHECK(ranking.ranked.size() == a.size() * b.size());

    // the observed pair appears with positive validity minima on both sides
    const auto observed = std::find_if(
        ranking.ranked.begin(), ranking.ranked.end(), [](const RankedPair& p) {
            return p.alice.record.hip_id == "56127" && p.bob.record.hip_id == "105259A";
        });
    REQUIRE(observed != ranking.ranked.end());
    CHECK(std::abs(observed->alice.min_tau_valid_s - 2.55e-6) < 0.05e-6);
    CHECK(std::abs(observed->bob.min_tau_valid_s - 6.93e-6) < 0.05e-6);

    // shuffling the inputs does not change the ranking
    std::mt19937_64 rng(7);
    std::shuffle(a.begin(), a.end(), rng);
    std::shuffle(b.begin(), b.end(), rng);
    const PairRanking again = rank_pairs(a, b);
    REQUIRE(again.ranked.size() == ranking.ranked.size());
    for (std::size_t k = 0; k < ranking.ranked.size(); ++k) {
        CHECK(again.ranked[k].alice.record.hip_id == ranking.ranked[k].alice.record.hip_id);
        CHECK(again.ranked[k].bob.record.hip_id == ranking.ranked[k].bob.record.hip_id);
    }
}

TEST_CASE("single candidates produce exactly one pair")
{
    RankedCandidate a;
    a.record.hip_id = "1";
    a.min_tau_valid_s = 2e-6;
    RankedCandidate b;
    b.record.hip_id = "2";
    b.min_tau_valid_s = 5e-6;
    const PairRanking ranking = rank_pairs({a}, {b});
    CHECK(ranking.ranked.size() == 1);
    CHECK(ranking.misaligned.empty());
}

TEST_CASE("causally misaligned pairs are excluded and flagged")
{
    RankedCandidate good;
    good.record.hip_id = "1";
    good.min_tau_valid_s = 2e-6;
    RankedCandidate bad;
    bad.record.hip_id = "3";
    bad.min_tau_valid_s = -1e-6;  // star opposite the baseline
    const PairRanking ranking = rank_pairs({good}, {good, bad});
    CHECK(ranking.ranked.size() == 1);
    REQUIRE(ranking.misaligned.size() == 1);
    CHECK(ranking.misaligned.front().bob.record.hip_id == "3");
    CHECK(!ranking.misaligned.front().causally_aligned);
}
