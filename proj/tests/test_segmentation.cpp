#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "dvol/segmentation.hpp"

using namespace dvol;

namespace {

std::vector<BsmRecord> run_of(const std::string& device, std::int64_t t0,
                              std::size_t n, std::int64_t dt_ms = 100) {
  std::vector<BsmRecord> rs;
  for (std::size_t i = 0; i < n; ++i) {
    BsmRecord r;
    r.device_id = device;
    r.t = t0 + static_cast<std::int64_t>(i) * dt_ms;
    r.speed = 10.0;
    rs.push_back(std::move(r));
  }
  return rs;
}

}  // namespace

TEST_CASE("a gap-free run is one passing", "[segmentation]") {
  const auto result = segment_passings(run_of("D1", 0, 30), "S", 5.0, 2);
  REQUIRE(result.passings.size() == 1);
  CHECK(result.passings[0].records.size() == 30);
  CHECK(result.discarded_runs == 0);
}

TEST_CASE("a gap beyond the threshold splits the run", "[segmentation]") {
  auto records = run_of("D1", 0, 15);
  const auto second = run_of("D1", 15 * 100 + 10000, 15);  // 10 s gap
  records.insert(records.end(), second.begin(), second.end());
  const auto result = segment_passings(std::move(records), "S", 5.0, 2);
  REQUIRE(result.passings.size() == 2);
  CHECK(result.passings[0].records.size() == 15);
  CHECK(result.passings[1].records.size() == 15);
}

TEST_CASE("short runs are discarded and counted", "[segmentation]") {
  const auto result = segment_passings(run_of("D1", 0, 2), "S", 5.0, 5);
  CHECK(result.passings.empty());
  CHECK(result.discarded_runs == 1);
  CHECK(result.discarded_records == 2);
}

TEST_CASE("devices never share a passing", "[segmentation]") {
  auto records = run_of("D1", 0, 20);
  const auto other = run_of("D2", 0, 20);
  records.insert(records.end(), other.begin(), other.end());
  const auto result = segment_passings(std::move(records), "S", 5.0, 2);
  REQUIRE(result.passings.size() == 2);
  CHECK(result.passings[0].device_id != result.passings[1].device_id);
}

TEST_CASE("tied timestamps within a device are a defensive error", "[segmentation]") {
  auto records = run_of("D1", 0, 5);
  records.push_back(records[2]);
  REQUIRE_THROWS_AS(segment_passings(std::move(records), "S", 5.0, 2), DataError);
}

TEST_CASE("partition property: every record lands in exactly one bucket",
          "[segmentation][property]") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> n_runs(1, 12);
  std::uniform_int_distribution<int> run_len(1, 40);
  std::uniform_int_distribution<int> device(0, 3);

  for (int rep = 0; rep < 50; ++rep) {
    std::vector<BsmRecord> records;
    std::int64_t t = 0;
    const int runs = n_runs(rng);
    for (int i = 0; i < runs; ++i) {
      const auto r = run_of("D" + std::to_string(device(rng)), t, run_len(rng));
      records.insert(records.end(), r.begin(), r.end());
      t += 1000000;  // far apart: every chunk is its own run
    }
    const std::size_t input = records.size();
    const auto result = segment_passings(std::move(records), "S", 30.0, 10);
    std::size_t in_passings = 0;
    for (const auto& p : result.passings) in_passings += p.records.size();
    CHECK(in_passings + result.discarded_records == input);
    CHECK(result.input_records == input);
  }
}

TEST_CASE("input order does not matter", "[segmentation][property]") {
  auto records = run_of("D1", 0, 25);
  auto more = run_of("D2", 3000, 25);
  records.insert(records.end(), more.begin(), more.end());
  auto gap = run_of("D1", 70000, 12);
  records.insert(records.end(), gap.begin(), gap.end());

  auto sorted_result = segment_passings(records, "S", 30.0, 10);

  std::mt19937_64 rng(5);
  std::shuffle(records.begin(), records.end(), rng);
  auto shuffled_result = segment_passings(records, "S", 30.0, 10);

  REQUIRE(sorted_result.passings.size() == shuffled_result.passings.size());
  for (std::size_t i = 0; i < sorted_result.passings.size(); ++i) {
    CHECK(sorted_result.passings[i].device_id == shuffled_result.passings[i].device_id);
    CHECK(sorted_result.passings[i].records == shuffled_result.passings[i].records);
  }
}

TEST_CASE("re-segmenting emitted passings is idempotent", "[segmentation][property]") {
  auto records = run_of("D1", 0, 25);
  auto more = run_of("D1", 90000, 30);
  records.insert(records.end(), more.begin(), more.end());
  auto other = run_of("D9", 100, 40);
  records.insert(records.end(), other.begin(), other.end());

  const auto first = segment_passings(records, "S", 30.0, 10);
  std::vector<BsmRecord> replay;
  for (const auto& p : first.passings)
    replay.insert(replay.end(), p.records.begin(), p.records.end());
  const auto second = segment_passings(replay, "S", 30.0, 10);

  REQUIRE(first.passings.size() == second.passings.size());
  for (std::size_t i = 0; i < first.passings.size(); ++i)
    CHECK(first.passings[i].records == second.passings[i].records);
  CHECK(second.discarded_runs == 0);
}
