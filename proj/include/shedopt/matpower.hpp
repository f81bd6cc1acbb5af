#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <string>
#include <vector>

#include "shedopt/case.hpp"
#include "shedopt/errors.hpp"

namespace shedopt {

/// Parse result plus the names of mpc.* blocks that were present in the
/// file but are not part of the supported subset (dclines, bus names, ...).
/// Plain parsing ignores those; conversion tooling refuses them.
struct MatpowerParse {
  NetworkCase network;
  std::vector<std::string> skipped_blocks;
};

namespace detail {

// Character cursor over a case file. Understands '%' comments and knows its
// line number for error messages.
class MpScanner {
 public:
  explicit MpScanner(const std::string& text) : s_(text) {}

  void skip_ws() {
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (c == '%') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else if (c == '\n') {
        ++line_;
        ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  bool eof() {
    skip_ws();
    return pos_ >= s_.size();
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  bool accept(char c) {
    skip_ws();
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c, const char* what) {
    if (!accept(c))
      throw ParseError(std::string("expected '") + c + "' " + what, line_);
  }

  // Identifier, possibly dotted (mpc.bus).
  std::string ident() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
            s_[pos_] == '_' || s_[pos_] == '.'))
      ++pos_;
    return s_.substr(start, pos_ - start);
  }

  double number() {
    skip_ws();
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) throw ParseError("malformed number", line_);
    pos_ += static_cast<std::size_t>(end - begin);
    return v;
  }

  // 'quoted string'
  std::string quoted() {
    skip_ws();
    expect('\'', "to open string");
    std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != '\'' && s_[pos_] != '\n') ++pos_;
    if (peek() != '\'') throw ParseError("unterminated string", line_);
    std::string v = s_.substr(start, pos_ - start);
    ++pos_;
    return v;
  }

  void skip_to_eol() {
    while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
  }

  void advance() {
    if (pos_ < s_.size()) {
      if (s_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  // Rows of numbers between [ and ]. Rows end on ';' or newline.
  std::vector<std::vector<double>> matrix() {
    expect('[', "to open matrix");
    std::vector<std::vector<double>> rows;
    std::vector<double> row;
    while (true) {
      // manual whitespace scan: a newline terminates the current row
      while (pos_ < s_.size()) {
        char c = s_[pos_];
        if (c == '%') {
          while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
        } else if (c == '\n') {
          ++line_;
          ++pos_;
          if (!row.empty()) {
            rows.push_back(std::move(row));
            row.clear();
          }
        } else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
          ++pos_;
        } else {
          break;
        }
      }
      if (pos_ >= s_.size()) throw ParseError("unterminated matrix", line_);
      char c = s_[pos_];
      if (c == ']') {
        ++pos_;
        if (!row.empty()) rows.push_back(std::move(row));
        return rows;
      }
      if (c == ';') {
        ++pos_;
        if (!row.empty()) {
          rows.push_back(std::move(row));
          row.clear();
        }
        continue;
      }
      row.push_back(number());
    }
  }

  int line() const { return line_; }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

inline void require_cols(const std::vector<double>& row, std::size_t need,
                         const char* table, std::size_t rownum) {
  if (row.size() < need)
    throw ParseError(std::string(table) + " row " + std::to_string(rownum + 1) +
                     " has " + std::to_string(row.size()) +
                     " columns, need at least " + std::to_string(need));
}

}  // namespace detail

/// Parses the matrix-literal subset of the Matpower case format and reports
/// any unsupported blocks alongside the case.
inline MatpowerParse parse_matpower_case_details(const std::string& text) {
  detail::MpScanner sc(text);
  MatpowerParse out;

  bool saw_base = false;
  std::vector<std::vector<double>> bus_rows, gen_rows, branch_rows, cost_rows;
  bool saw_bus = false, saw_gen = false, saw_branch = false, saw_cost = false;

  while (!sc.eof()) {
    std::string name = sc.ident();
    if (name.empty())
      throw ParseError("unexpected character in case file", sc.line());
    if (name == "function") {
      (void)sc.ident();
      if (sc.accept('=')) out.network.name = sc.ident();
      sc.skip_to_eol();
      continue;
    }

    // strip the variable prefix: mpc.bus -> bus
    std::string field = name;
    if (auto dot = field.rfind('.'); dot != std::string::npos)
      field = field.substr(dot + 1);

    sc.expect('=', "after assignment target");

    if (field == "baseMVA") {
      out.network.base_mva = sc.number();
      saw_base = true;
      sc.accept(';');
    } else if (field == "version") {
      (void)sc.quoted();
      sc.accept(';');
    } else if (field == "bus") {
      bus_rows = sc.matrix();
      saw_bus = true;
      sc.accept(';');
    } else if (field == "gen") {
      gen_rows = sc.matrix();
      saw_gen = true;
      sc.accept(';');
    } else if (field == "branch") {
      branch_rows = sc.matrix();
      saw_branch = true;
      sc.accept(';');
    } else if (field == "gencost") {
      cost_rows = sc.matrix();
      saw_cost = true;
      sc.accept(';');
    } else {
      out.skipped_blocks.push_back(name);
      sc.skip_ws();
      if (sc.peek() == '\'') {
        (void)sc.quoted();
      } else if (sc.peek() == '[') {
        (void)sc.matrix();
      } else if (sc.peek() == '{') {
        // cell arrays (bus_name and friends): balance braces
        int depth = 0;
        do {
          if (sc.eof()) throw ParseError("unterminated cell array", sc.line());
          if (sc.accept('{')) {
            ++depth;
          } else if (sc.accept('}')) {
            --depth;
          } else if (sc.peek() == '\'') {
            (void)sc.quoted();
          } else {
            sc.advance();
          }
        } while (depth > 0);
      } else {
        (void)sc.number();
      }
      sc.accept(';');
    }
  }

  if (!saw_base) throw SchemaError("missing required block: baseMVA");
  if (!saw_bus) throw SchemaError("missing required block: bus");
  if (!saw_gen) throw SchemaError("missing required block: gen");
  if (!saw_branch) throw SchemaError("missing required block: branch");
  if (!saw_cost) throw SchemaError("missing required block: gencost");
  if (bus_rows.empty()) throw SchemaError("bus matrix is empty (no buses)");
  if (gen_rows.empty()) throw SchemaError("gen matrix is empty");

  NetworkCase& net = out.network;

  for (std::size_t i = 0; i < bus_rows.size(); ++i) {
    const auto& r = bus_rows[i];
    detail::require_cols(r, 13, "bus", i);
    Bus b;
    b.id = static_cast<int>(r[0]);
    const int type = static_cast<int>(r[1]);
    if (type == 4)
      throw ValidationError("bus " + std::to_string(b.id) +
                            " is isolated (type 4), unsupported");
    b.is_reference = (type == 3);
    b.p_demand = r[2];
    b.q_demand = r[3];
    b.shunt_g = r[4];
    b.shunt_b = r[5];
    b.v_max = r[11];
    b.v_min = r[12];
    net.buses.push_back(b);
  }

  for (std::size_t i = 0; i < gen_rows.size(); ++i) {
    const auto& r = gen_rows[i];
    detail::require_cols(r, 10, "gen", i);
    Generator g;
    g.at_bus = static_cast<int>(r[0]);
    g.q_max = r[3];
    g.q_min = r[4];
    g.in_service = r[7] > 0.0;
    g.p_max = r[8];
    g.p_min = r[9];
    net.generators.push_back(g);
  }

  if (cost_rows.size() < net.generators.size())
    throw SchemaError("gencost has fewer rows than gen");
  if (cost_rows.size() > net.generators.size())
    out.skipped_blocks.push_back("gencost reactive-power rows");

  for (std::size_t i = 0; i < net.generators.size(); ++i) {
    const auto& r = cost_rows[i];
    detail::require_cols(r, 4, "gencost", i);
    const int model = static_cast<int>(r[0]);
    if (model != 2)
      throw ParseError("gencost row " + std::to_string(i + 1) +
                       ": only polynomial cost (model 2) is supported");
    const int ncost = static_cast<int>(r[3]);
    if (ncost < 1 || ncost > 3)
      throw ParseError("gencost row " + std::to_string(i + 1) +
                       ": polynomial degree > 2 is unsupported");
    detail::require_cols(r, 4 + static_cast<std::size_t>(ncost), "gencost", i);
    auto& coeffs = net.generators[i].cost_coeffs;
    coeffs.assign(static_cast<std::size_t>(ncost), 0.0);
    for (int k = 0; k < ncost; ++k)
      coeffs[static_cast<std::size_t>(ncost - 1 - k)] = r[4 + k];
  }

  for (std::size_t i = 0; i < branch_rows.size(); ++i) {
    const auto& r = branch_rows[i];
    detail::require_cols(r, 11, "branch", i);
    Branch br;
    br.from_bus = static_cast<int>(r[0]);
    br.to_bus = static_cast<int>(r[1]);
    br.r = r[2];
    br.x = r[3];
    br.b_charging = r[4];
    br.rate = r[5];
    br.tap = r[8] == 0.0 ? 1.0 : r[8];
    br.shift = r[9] * std::numbers::pi / 180.0;
    br.in_service = r[10] > 0.0;
    net.branches.push_back(br);
  }

  validate(net);
  return out;
}

/// Parses a Matpower case file, ignoring unsupported extra blocks.
inline NetworkCase parse_matpower_case(const std::string& text) {
  return parse_matpower_case_details(text).network;
}

}  // namespace shedopt
