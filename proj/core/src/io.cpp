#include "compresid/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "compresid/dirichlet.hpp"
#include "compresid/error.hpp"

namespace compresid {

namespace {

constexpr std::string_view kSchemaPrefix = "# compresid-";
constexpr int kArtifactVersion = 1;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.size() - start
                                                                             : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::string unquote(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

double parse_number(std::string_view text, std::size_t row, std::string_view column) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last) {
    throw DataError("column '" + std::string(column) + "': cannot parse '" + std::string(text) +
                        "' as a number",
                    row);
  }
  return value;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json submodel_json(const Submodel& s) {
  return {{"intercept", s.intercept}, {"covariates", s.covariates}};
}

Submodel submodel_from(const nlohmann::json& j) {
  return Submodel{j.at("intercept").get<bool>(), j.at("covariates").get<std::vector<std::string>>()};
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw DataError("write to '" + path.string() + "' failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw DataError("cannot move output into '" + path.string() + "': " + ec.message());
  }
}

std::string schema_line(std::string_view schema, int version) {
  return std::string(kSchemaPrefix) + std::string(schema) + " v" + std::to_string(version);
}

bool check_schema_line(std::string_view line, std::string_view expected_schema,
                       int expected_version) {
  line = trim(line);
  if (line.substr(0, kSchemaPrefix.size()) != kSchemaPrefix) return false;
  const std::string_view rest = line.substr(kSchemaPrefix.size());
  const std::size_t space = rest.find(' ');
  const std::string_view name = rest.substr(0, space);
  if (name != expected_schema) {
    throw DataError("expected a '" + std::string(expected_schema) + "' file, got schema '" +
                    std::string(name) + "'");
  }
  const std::string_view tag = space == std::string_view::npos ? "" : trim(rest.substr(space));
  int version = 0;
  bool ok = tag.size() > 1 && tag.front() == 'v';
  if (ok) {
    const auto [ptr, ec] = std::from_chars(tag.data() + 1, tag.data() + tag.size(), version);
    ok = ec == std::errc() && ptr == tag.data() + tag.size();
  }
  if (!ok || version != expected_version) {
    throw DataError("unsupported " + std::string(expected_schema) + " schema version '" +
                    std::string(tag) + "' (this build reads v" + std::to_string(expected_version) +
                    ")");
  }
  return true;
}

CsvTable parse_csv(std::string_view text, std::string_view expected_schema) {
  CsvTable table;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!have_header && line.front() == '#') {
      check_schema_line(line, expected_schema);
      continue;
    }
    const auto fields = split_fields(line);
    if (!have_header) {
      for (const auto f : fields) {
        std::string name = unquote(f);
        if (name.empty()) throw DataError("empty column name in header");
        for (const auto& existing : table.header) {
          if (existing == name) throw DataError("duplicate column '" + name + "'");
        }
        table.header.push_back(std::move(name));
      }
      have_header = true;
      continue;
    }
    const std::size_t row = table.rows.size();
    if (fields.size() != table.header.size()) {
      throw DataError("expected " + std::to_string(table.header.size()) + " fields, found " +
                          std::to_string(fields.size()),
                      row);
    }
    std::vector<double> values(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      values[c] = parse_number(fields[c], row, table.header[c]);
    }
    table.rows.push_back(std::move(values));
  }
  if (!have_header) throw DataError("CSV input has no header row");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path, std::string_view expected_schema) {
  return parse_csv(read_text(path), expected_schema);
}

Dataset dataset_from_table(const CsvTable& table, const std::vector<std::string>& components,
                           bool raw) {
  if (components.size() < 2) throw UsageError("at least two component columns are required");
  std::vector<std::size_t> comp_cols;
  for (const auto& name : components) {
    std::size_t found = table.header.size();
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (table.header[c] == name) found = c;
    }
    if (found == table.header.size()) throw DataError("component column '" + name + "' not found");
    for (const auto prior : comp_cols) {
      if (prior == found) throw UsageError("component '" + name + "' listed twice");
    }
    comp_cols.push_back(found);
  }
  std::vector<std::size_t> cov_cols;
  Dataset data;
  data.component_names = components;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (std::find(comp_cols.begin(), comp_cols.end(), c) == comp_cols.end()) {
      cov_cols.push_back(c);
      data.covariate_names.push_back(table.header[c]);
    }
  }
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  if (n == 0) throw DataError("dataset has no rows");
  data.responses.resize(n, static_cast<Eigen::Index>(comp_cols.size()));
  data.covariates.resize(n, static_cast<Eigen::Index>(cov_cols.size()));
  std::vector<double> w(comp_cols.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < comp_cols.size(); ++j) w[j] = row[comp_cols[j]];
    for (std::size_t c = 0; c < cov_cols.size(); ++c) {
      const double x = row[cov_cols[c]];
      if (!std::isfinite(x)) {
        throw DataError("covariate '" + data.covariate_names[c] + "' is not finite",
                        static_cast<std::size_t>(i));
      }
      data.covariates(i, static_cast<Eigen::Index>(c)) = x;
    }
    if (raw) {
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (!std::isfinite(w[j])) {
          throw DataError("component '" + components[j] + "' is not finite",
                          static_cast<std::size_t>(i));
        }
        data.responses(i, static_cast<Eigen::Index>(j)) = w[j];
      }
      continue;
    }
    try {
      data.responses.row(i) = Composition::from_observed(w).values().transpose();
    } catch (const DataError& e) {
      throw DataError(e.what(), static_cast<std::size_t>(i));
    }
  }
  return data;
}

Dataset read_dataset(const std::filesystem::path& path, const std::vector<std::string>& components,
                     bool raw) {
  return dataset_from_table(read_csv(path), components, raw);
}

std::string dataset_csv(const Dataset& data) {
  std::ostringstream out;
  out << schema_line("data") << '\n';
  bool first = true;
  for (const auto& name : data.component_names) {
    out << (first ? "" : ",") << name;
    first = false;
  }
  for (const auto& name : data.covariate_names) out << ',' << name;
  out << '\n';
  for (Eigen::Index i = 0; i < data.responses.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.responses.cols(); ++j) {
      out << (j == 0 ? "" : ",") << format_double(data.responses(i, j));
    }
    for (Eigen::Index c = 0; c < data.covariates.cols(); ++c) {
      out << ',' << format_double(data.covariates(i, c));
    }
    out << '\n';
  }
  return out.str();
}

std::string artifact_json(const ModelArtifact& artifact) {
  const FittedModel& fit = artifact.fit;
  nlohmann::json mean = nlohmann::json::array();
  for (const auto& s : fit.spec.mean) mean.push_back(submodel_json(s));
  nlohmann::json beta = nlohmann::json::array();
  for (const auto& b : fit.coef.beta) beta.push_back(vector_json(b));
  nlohmann::json inv = nlohmann::json::array();
  for (Eigen::Index r = 0; r < fit.inverse_hessian.rows(); ++r) {
    inv.push_back(vector_json(fit.inverse_hessian.row(r).transpose()));
  }
  nlohmann::json j = {
      {"format", "compresid-model"},
      {"format_version", kArtifactVersion},
      {"components", artifact.component_names},
      {"spec",
       {{"k", fit.spec.k},
        {"reference", fit.spec.reference},
        {"mean", mean},
        {"precision", submodel_json(fit.spec.precision)}}},
      {"coefficients", {{"beta", beta}, {"gamma", vector_json(fit.coef.gamma)}}},
      {"std_errors", fit.std_errors ? vector_json(*fit.std_errors) : nlohmann::json(nullptr)},
      {"loglik", fit.loglik},
      {"converged", fit.converged},
      {"iterations", fit.iterations},
      {"gradient_max_norm", fit.gradient_max_norm},
      {"inverse_hessian", inv},
      {"seed", artifact.seed},
      {"data_source", artifact.data_source},
  };
  return j.dump(2) + "\n";
}

ModelArtifact parse_artifact_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "compresid-model") {
      throw DataError("not a compresid model file");
    }
    const int version = j.at("format_version").get<int>();
    if (version != kArtifactVersion) {
      throw DataError("unsupported model format_version " + std::to_string(version));
    }
    ModelArtifact a;
    a.component_names = j.at("components").get<std::vector<std::string>>();
    FittedModel& fit = a.fit;
    const auto& spec = j.at("spec");
    fit.spec.k = spec.at("k").get<std::size_t>();
    fit.spec.reference = spec.at("reference").get<std::size_t>();
    for (const auto& s : spec.at("mean")) fit.spec.mean.push_back(submodel_from(s));
    fit.spec.precision = submodel_from(spec.at("precision"));
    fit.spec.validate();
    if (a.component_names.size() != fit.spec.k) {
      throw DataError("model file lists " + std::to_string(a.component_names.size()) +
                      " components for k = " + std::to_string(fit.spec.k));
    }
    const auto& coef = j.at("coefficients");
    for (const auto& b : coef.at("beta")) fit.coef.beta.push_back(vector_from(b));
    fit.coef.gamma = vector_from(coef.at("gamma"));
    // Shape check.
    CoefficientVector::unflatten(fit.spec, fit.coef.flatten());
    for (std::size_t m = 0; m < fit.spec.mean.size(); ++m) {
      if (static_cast<std::size_t>(fit.coef.beta.at(m).size()) != fit.spec.mean[m].size()) {
        throw DataError("coefficient block size does not match the model spec");
      }
    }
    if (static_cast<std::size_t>(fit.coef.gamma.size()) != fit.spec.precision.size()) {
      throw DataError("precision coefficients do not match the model spec");
    }
    if (!j.at("std_errors").is_null()) fit.std_errors = vector_from(j.at("std_errors"));
    fit.loglik = j.at("loglik").get<double>();
    fit.converged = j.at("converged").get<bool>();
    fit.iterations = j.at("iterations").get<int>();
    fit.gradient_max_norm = j.at("gradient_max_norm").get<double>();
    const auto& inv = j.at("inverse_hessian");
    const auto p = static_cast<Eigen::Index>(fit.spec.parameter_count());
    if (!inv.empty()) {
      if (static_cast<Eigen::Index>(inv.size()) != p) {
        throw DataError("inverse_hessian has the wrong size");
      }
      fit.inverse_hessian.resize(p, p);
      for (Eigen::Index r = 0; r < p; ++r) {
        const Eigen::VectorXd row = vector_from(inv.at(static_cast<std::size_t>(r)));
        if (row.size() != p) throw DataError("inverse_hessian has the wrong size");
        fit.inverse_hessian.row(r) = row.transpose();
      }
    } else {
      fit.inverse_hessian = Eigen::MatrixXd::Identity(p, p);
    }
    a.seed = j.at("seed").get<std::uint64_t>();
    a.data_source = j.at("data_source").get<std::string>();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

ModelArtifact read_artifact(const std::filesystem::path& path) {
  return parse_artifact_json(read_text(path));
}

FittedModel restore_fit(const ModelArtifact& artifact, const Dataset& data) {
  if (data.component_names != artifact.component_names) {
    throw DataError("data components do not match the model's components");
  }
  FittedModel fit = artifact.fit;
  fit.spec.validate(data);
  const Design design(fit.spec, data);
  const FittedValues fv = design.predict(fit.coef.flatten());
  fit.fitted_mu = fv.mu;
  fit.fitted_phi = fv.phi;
  fit.loglik = Likelihood(design, data.responses).evaluate(fit.coef.flatten());
  return fit;
}

std::string envelope_csv(const EnvelopeResult& env,
                         const std::vector<std::pair<std::string, std::string>>& metadata) {
  std::ostringstream out;
  out << schema_line("envelope") << '\n';
  for (const auto& [key, value] : metadata) out << "# " << key << '=' << value << '\n';
  out << "order_index,theoretical_quantile,residual,lower,upper\n";
  for (Eigen::Index i = 0; i < env.sorted_residuals.size(); ++i) {
    out << (i + 1) << ',' << format_double(env.theoretical_quantiles[i]) << ','
        << format_double(env.sorted_residuals[i]) << ',' << format_double(env.lower_band[i]) << ','
        << format_double(env.upper_band[i]) << '\n';
  }
  return out.str();
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

}  // namespace compresid
