#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "slq/cli.hpp"

namespace slq::cli {

namespace {

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::filesystem::filesystem_error("cannot write", file, std::make_error_code(std::errc::permission_denied));
  out << text;
  if (!out) throw std::filesystem::filesystem_error("write failed", file, std::make_error_code(std::errc::io_error));
}

// %.17g keeps every bit, so the CSV round-trips like the JSON does.
std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::vector<std::filesystem::path> emit_report(const std::vector<IdentityReport>& reports,
                                               const std::vector<std::string>& formats,
                                               const std::filesystem::path& dir) {
  if (reports.empty()) throw ContractViolation("emit_report: no reports");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& format : formats) {
    if (format == "json") {
      const auto file = dir / "reports.json";
      write_text(file, reports_to_json(reports).dump(2) + "\n");
      written.push_back(file);
    } else if (format == "csv") {
      std::ostringstream os;
      os << "name,lhs,lhs_se,rhs,rhs_se,residual,tolerance,pass,notes\n";
      for (const auto& r : reports) {
        std::string notes;
        for (const auto& n : r.notes) notes += (notes.empty() ? "" : "; ") + n;
        os << csv_field(r.name) << ',' << num(r.lhs) << ',' << num(r.lhs_se) << ','
           << num(r.rhs) << ',' << num(r.rhs_se) << ',' << num(r.residual) << ','
           << num(r.tolerance) << ',' << (r.pass ? "true" : "false") << ','
           << csv_field(notes) << '\n';
      }
      const auto file = dir / "reports.csv";
      write_text(file, os.str());
      written.push_back(file);
    } else {
      throw ConfigError("emit_report: unknown format " + format);
    }
  }
  return written;
}

void write_p_diagnostics_csv(const RiccatiSolution& solution, const std::filesystem::path& file) {
  const int n = solution.modes();
  const int steps = solution.grid.steps;
  std::ostringstream os;
  if (solution.representation == Representation::Deterministic) {
    os << "step,t,i,j,value\n";
    for (int k = 0; k <= steps; ++k) {
      const Eigen::MatrixXd p = solution.p(k);
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
          os << k << ',' << num(solution.grid.time(k)) << ',' << i << ',' << j << ','
             << num(p(i, j)) << '\n';
    }
  } else {
    // The terminal row holds G(w) itself, which need not be polynomial; it is
    // written as its value at w = 0 in coef_0.
    int degree = 0;
    for (int k = 0; k < steps; ++k) degree = std::max(degree, solution.p_models[k].degree());
    os << "step,t,i,j";
    for (int d = 0; d <= degree; ++d) os << ",coef_" << d;
    os << '\n';
    for (int k = 0; k <= steps; ++k) {
      std::vector<Eigen::MatrixXd> coefs;
      if (k < steps) {
        coefs = solution.p_models[k].coefficients();
      } else {
        coefs = {solution.p(k, 0.0)};
      }
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          os << k << ',' << num(solution.grid.time(k)) << ',' << i << ',' << j;
          for (int d = 0; d <= degree; ++d)
            os << ',' << num(d < static_cast<int>(coefs.size()) ? coefs[d](i, j) : 0.0);
          os << '\n';
        }
    }
  }
  write_text(file, os.str());
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::filesystem::filesystem_error("cannot read", file, std::make_error_code(std::errc::no_such_file_or_directory));
  std::ostringstream os;
  os << in.rdbuf();
  return sha256_hex(os.str());
}

}  // namespace slq::cli
