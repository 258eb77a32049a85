#pragma once

#include "satmem/cnf.hpp"

#include <charconv>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace satmem {

class DimacsError : public std::runtime_error {
public:
  DimacsError(std::size_t line, const std::string &what)
      : std::runtime_error("dimacs:" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

struct DimacsDocument {
  std::size_t var_count = 0;
  std::vector<Clause> clauses;
  std::vector<std::string> comments; // without the leading "c "
};

/// Whitespace-tolerant reader. Clauses may span lines; each ends with 0.
inline DimacsDocument dimacs_parse(std::string_view text) {
  DimacsDocument doc;
  bool have_header = false;
  std::size_t declared_clauses = 0;
  Clause current;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos)
      eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.remove_suffix(1);
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos)
      continue;
    line.remove_prefix(first);
    if (line[0] == 'c') {
      std::string_view body = line.substr(1);
      if (!body.empty() && body.front() == ' ')
        body.remove_prefix(1);
      doc.comments.emplace_back(body);
      continue;
    }
    if (line[0] == '%') // SATLIB end marker
      break;
    if (line[0] == 'p') {
      if (have_header)
        throw DimacsError(line_no, "duplicate header");
      std::istringstream in{std::string(line)};
      std::string p, fmt;
      long long vars = -1, ncl = -1;
      if (!(in >> p >> fmt >> vars >> ncl) || p != "p" || fmt != "cnf" || vars < 0 || ncl < 0)
        throw DimacsError(line_no, "malformed header");
      std::string extra;
      if (in >> extra)
        throw DimacsError(line_no, "malformed header");
      doc.var_count = static_cast<std::size_t>(vars);
      declared_clauses = static_cast<std::size_t>(ncl);
      have_header = true;
      continue;
    }
    if (!have_header)
      throw DimacsError(line_no, "clause before header");
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t'))
        ++i;
      if (i >= line.size())
        break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t')
        ++j;
      long long v = 0;
      auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + j, v);
      if (ec != std::errc() || ptr != line.data() + j)
        throw DimacsError(line_no, "bad literal '" + std::string(line.substr(i, j - i)) + "'");
      i = j;
      if (v == 0) {
        if (current.empty())
          throw DimacsError(line_no, "empty clause");
        doc.clauses.push_back(std::move(current));
        current.clear();
        continue;
      }
      const long long mag = v < 0 ? -v : v;
      if (mag > static_cast<long long>(doc.var_count))
        throw DimacsError(line_no, "literal " + std::to_string(v) + " out of range");
      current.push_back(static_cast<Literal>(v));
    }
  }
  if (!have_header)
    throw DimacsError(line_no, "missing header");
  if (!current.empty())
    throw DimacsError(line_no, "missing terminating 0");
  if (doc.clauses.size() != declared_clauses)
    throw DimacsError(line_no, "header declares " + std::to_string(declared_clauses) +
                                   " clauses, found " + std::to_string(doc.clauses.size()));
  return doc;
}

inline std::string dimacs_format(const DimacsDocument &doc) {
  std::string out;
  for (const auto &c : doc.comments)
    out += "c " + c + "\n";
  out += "p cnf " + std::to_string(doc.var_count) + " " + std::to_string(doc.clauses.size()) + "\n";
  for (const auto &cl : doc.clauses) {
    for (Literal l : cl) {
      out += std::to_string(l);
      out += ' ';
    }
    out += "0\n";
  }
  return out;
}

inline std::string dimacs_write(const CnfStore &store, const std::vector<std::string> &comments = {}) {
  DimacsDocument doc;
  doc.var_count = store.var_count();
  doc.clauses = store.clauses();
  doc.comments = comments;
  return dimacs_format(doc);
}

/// Loads into a fresh store. Clauses are canonicalized and deduplicated.
inline CnfStore dimacs_read(std::string_view text) {
  DimacsDocument doc = dimacs_parse(text);
  CnfStore store(doc.var_count);
  for (const auto &c : doc.clauses)
    store.add_clause(c);
  return store;
}

} // namespace satmem
