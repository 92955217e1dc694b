#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "compresid/error.hpp"
#include "compresid/io.hpp"
#include "compresid/preprocess.hpp"
#include "compresid/rng.hpp"
#include "compresid/simstudy.hpp"

using namespace compresid;

namespace {

Dataset rows_dataset(std::initializer_list<std::initializer_list<double>> rows) {
  Dataset d;
  d.responses.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (const double v : r) d.responses(i, j++) = v;
    ++i;
  }
  for (Eigen::Index j = 0; j < d.responses.cols(); ++j) d.component_names.push_back("y" + std::to_string(j + 1));
  d.covariates.resize(d.responses.rows(), 0);
  return d;
}

template <class F>
std::optional<std::size_t> data_error_row(F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.row();
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("zero replacement") {
  const Dataset in = rows_dataset({{0.2, 0.3, 0.5}, {0.0, 0.6, 0.4}, {0.1, 0.1, 0.8}});
  const Dataset out = preprocess_zeros(in, 0.001, 0.5);
  CHECK(out.responses(1, 0) == doctest::Approx(0.001 / 1.001).epsilon(1e-14));
  CHECK(out.responses(1, 1) == doctest::Approx(0.6 / 1.001).epsilon(1e-14));
  CHECK(out.responses(1, 2) == doctest::Approx(0.4 / 1.001).epsilon(1e-14));
  CHECK(out.responses.row(0) == in.responses.row(0));
  CHECK(out.responses.row(2) == in.responses.row(2));
  CHECK(std::fabs(out.responses.row(1).sum() - 1.0) < 1e-15);

  CHECK_THROWS_AS(preprocess_zeros(in, 0.0), UsageError);
  CHECK_THROWS_AS(preprocess_zeros(in, 0.4), UsageError);
  CHECK(data_error_row([&] { preprocess_zeros(rows_dataset({{0.5, 0.5}, {1.2, -0.2}})); }) == 1u);
  CHECK(data_error_row([&] { preprocess_zeros(rows_dataset({{0.5, 0.5}, {0.5, 0.5}, {0.3, 0.3}})); }) == 2u);
}

TEST_CASE("zero fraction limit") {
  RngStream rng(70, 0);
  Dataset d;
  d.responses.resize(42, 4);
  for (Eigen::Index i = 0; i < 42; ++i) {
    Eigen::Vector4d w;
    for (Eigen::Index j = 0; j < 4; ++j) w[j] = 0.1 + rng.next_uniform();
    d.responses.row(i) = (w / w.sum()).transpose();
  }
  d.component_names = {"a", "b", "c", "d"};
  d.covariates.resize(42, 0);
  for (const Eigen::Index i : {5, 17}) {
    d.responses(i, 0) = 0.0;
    d.responses.row(i) /= d.responses.row(i).sum();
  }
  const Dataset ok = preprocess_zeros(d);
  CHECK_NOTHROW(ok.validate());
  CHECK(ok.responses.minCoeff() > 0.0);

  for (const Eigen::Index i : {1, 2, 3}) {
    d.responses(i, 3) = 0.0;
    d.responses.row(i) /= d.responses.row(i).sum();
  }
  try {
    preprocess_zeros(d);
    FAIL("expected too many zero rows to be rejected");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("zero-adjusted") != std::string::npos);
  }
}

TEST_CASE("csv parsing") {
  const CsvTable t = parse_csv("# compresid-data v1\n# note\n\"x\",y1,y2\n1,0.25,0.75\n2,0.5,0.5\n");
  CHECK(t.header == std::vector<std::string>{"x", "y1", "y2"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][1] == 0.5);
  CHECK_NOTHROW(parse_csv("a,b\n1,2\n"));
  CHECK_THROWS_AS(parse_csv("# compresid-residuals v1\na,b\n1,2\n"), DataError);
  CHECK_THROWS_AS(parse_csv("# compresid-data v9\na,b\n1,2\n"), DataError);
  CHECK_THROWS_AS(parse_csv("a,a\n1,2\n"), DataError);
  CHECK_THROWS_AS(parse_csv("a,b\n1,x\n"), DataError);
  CHECK(data_error_row([] { parse_csv("a,b\n1,2\n3\n"); }).has_value());

  const Dataset d = dataset_from_table(parse_csv("x,y1,y2\n1,0.2500001,0.75\n2,0.5,0.5\n"), {"y1", "y2"});
  CHECK(d.responses(0, 0) == doctest::Approx(0.2500001 / 1.0000001).epsilon(1e-15));
  CHECK(d.responses.row(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d.covariate_names == std::vector<std::string>{"x"});
  CHECK_THROWS_AS(dataset_from_table(parse_csv("x,y1\n1,1\n"), {"y1", "y2"}), DataError);
  CHECK(data_error_row([] { dataset_from_table(parse_csv("x,y1,y2\n1,0.25,0.75\n2,0.7,0.7\n"), {"y1", "y2"}); }) == 1u);

  const Dataset raw = dataset_from_table(parse_csv("y1,y2\n0,1\n"), {"y1", "y2"}, true);
  CHECK(raw.responses(0, 0) == 0.0);
}

TEST_CASE("dataset round trip") {
  RngStream rng(71, 0);
  const Dataset d = generate_scenario_dataset(scenario_config("2a", 30), rng);
  const Dataset back = dataset_from_table(parse_csv(dataset_csv(d)), d.component_names, true);
  CHECK(back.responses == d.responses);
  CHECK(back.covariates == d.covariates);
  CHECK(back.covariate_names == d.covariate_names);
}

TEST_CASE("number formatting") {
  for (const double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("model artifact") {
  RngStream rng(72, 0);
  const Dataset d = generate_scenario_dataset(scenario_config("4a", 80), rng);
  FittedModel fit = fit_mle(scenario_model_spec(), d);
  REQUIRE(fit.converged);
  fit.std_errors = standard_errors(fit, d);
  ModelArtifact art{d.component_names, fit, 1234, "memory"};
  const std::string json = artifact_json(art);
  const ModelArtifact back = parse_artifact_json(json);
  CHECK(back.seed == 1234);
  CHECK(back.data_source == "memory");
  CHECK(back.fit.coef.flatten() == fit.coef.flatten());
  CHECK(*back.fit.std_errors == *fit.std_errors);
  CHECK(back.fit.inverse_hessian == fit.inverse_hessian);
  CHECK(back.fit.loglik == fit.loglik);
  CHECK(artifact_json(back) == json);

  const FittedModel restored = restore_fit(back, d);
  CHECK(restored.loglik == doctest::Approx(fit.loglik).epsilon(1e-12));
  CHECK((restored.fitted_mu - fit.fitted_mu).cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(parse_artifact_json("{}"), DataError);
  CHECK_THROWS_AS(parse_artifact_json("not json"), DataError);
  std::string wrong = json;
  wrong.replace(wrong.find("compresid-model"), 15, "something-else!");
  CHECK_THROWS_AS(parse_artifact_json(wrong), DataError);
}

TEST_CASE("atomic writes") {
  const auto dir = std::filesystem::temp_directory_path() / "compresid_io_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "f.txt", "hello\n");
  std::ifstream in(dir / "f.txt");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "hello\n");
  CHECK_THROWS(write_file_atomic(dir / "missing" / "f.txt", "x"));
  CHECK_FALSE(std::filesystem::exists(dir / "missing"));
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++entries;
  CHECK(entries == 1);
  std::filesystem::remove_all(dir);
}
