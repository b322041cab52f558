#pragma once

#include <filesystem>
#include <fstream>

#include "provlog/datalog.hpp"

namespace provlog {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

namespace detail {

// One CSV line, honoring single/double quotes inside cells.
inline std::vector<std::string> split_csv_line(const std::string& line, const std::string& where) {
  std::vector<std::string> cells;
  std::string cell;
  size_t i = 0;
  auto flush = [&] {
    size_t b = cell.find_first_not_of(" \t");
    size_t e = cell.find_last_not_of(" \t");
    std::string v = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
    if (v.size() >= 2 && (v.front() == '\'' || v.front() == '"') && v.back() == v.front())
      v = v.substr(1, v.size() - 2);
    cells.push_back(std::move(v));
    cell.clear();
  };
  while (i < line.size()) {
    char c = line[i];
    if (c == '\'' || c == '"') {
      size_t end = line.find(c, i + 1);
      if (end == std::string::npos)
        throw SyntaxError(where + ": unterminated quote");
      cell += line.substr(i, end - i + 1);
      i = end + 1;
    } else if (c == ',') {
      flush();
      ++i;
    } else {
      cell += c;
      ++i;
    }
  }
  flush();
  return cells;
}

}  // namespace detail

// Loads <pred>.csv files from a directory. A row prefixed with '?' is an
// undetermined tuple; a trailing cell @annot=<var> names the tuple's
// provenance variable.
inline Instance load_instance(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw Error("data directory " + dir.string() + " does not exist");
  Instance inst;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::string pred = file.stem().string();
    std::string text = read_file(file);
    std::istringstream lines(text);
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      std::string where = file.filename().string() + ":" + std::to_string(lineno);
      auto cells = detail::split_csv_line(line, where);
      bool undet = false;
      if (!cells.empty() && !cells[0].empty() && cells[0][0] == '?') {
        undet = true;
        cells[0] = cells[0].substr(1);
        auto& v = cells[0];
        if (v.size() >= 2 && (v.front() == '\'' || v.front() == '"') && v.back() == v.front())
          v = v.substr(1, v.size() - 2);
      }
      std::string annot;
      if (!cells.empty() && cells.back().rfind("@annot=", 0) == 0) {
        annot = cells.back().substr(7);
        if (annot.empty()) throw SyntaxError(where + ": empty annotation variable");
        cells.pop_back();
      }
      if (cells.empty()) throw SyntaxError(where + ": empty row");
      Tuple t(cells.begin(), cells.end());
      try {
        if (undet)
          inst.add_undetermined(pred, t);
        else
          inst.add(pred, t);
      } catch (const ArityMismatch& e) {
        throw ArityMismatch(where + ": " + e.what());
      }
      if (!annot.empty()) inst.annotate(pred, t, annot);
    }
  }
  return inst;
}

// One group per line: comma-separated attribute references like T.1,T.2.
inline DomainGroups load_domain_groups(const std::filesystem::path& path) {
  DomainGroups groups;
  std::istringstream lines(read_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '%' || line[b] == '#') continue;
    std::vector<AttrRef> group;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      size_t cb = cell.find_first_not_of(" \t");
      size_t ce = cell.find_last_not_of(" \t");
      if (cb == std::string::npos) continue;
      try {
        group.push_back(parse_attr_ref(cell.substr(cb, ce - cb + 1)));
      } catch (const SyntaxError& e) {
        throw SyntaxError(path.filename().string() + ":" + std::to_string(lineno) + ": " +
                          e.what());
      }
    }
    if (!group.empty()) groups.push_back(std::move(group));
  }
  return groups;
}

// Questions look like: WHY Q(n,s)  |  WHYNOT Q(s,X)
// Uppercase argument identifiers are variables.
inline ProvQuestion parse_question(const std::string& text) {
  detail::Lexer lex(text);
  detail::Token kw = lex.next();
  if (kw.kind != detail::Token::Kind::Ident)
    throw SyntaxError("question must start with WHY or WHYNOT");
  std::string k = kw.text;
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return std::toupper(c); });
  ProvQuestion q;
  if (k == "WHY")
    q.kind = ProvQuestion::Kind::Why;
  else if (k == "WHYNOT")
    q.kind = ProvQuestion::Kind::WhyNot;
  else
    throw SyntaxError("question must start with WHY or WHYNOT, got '" + kw.text + "'");
  detail::Token name = lex.next();
  if (name.kind != detail::Token::Kind::Ident || name.quoted)
    throw SyntaxError("question needs a predicate pattern");
  q.pattern.pred = name.text;
  auto expect = [&](const std::string& p) {
    detail::Token t = lex.next();
    if (t.kind != detail::Token::Kind::Punct || t.text != p)
      throw SyntaxError("question pattern: expected '" + p + "'");
  };
  expect("(");
  if (lex.peek().kind == detail::Token::Kind::Punct && lex.peek().text == ")") {
    lex.next();
  } else {
    while (true) {
      detail::Token t = lex.next();
      if (t.kind != detail::Token::Kind::Ident)
        throw SyntaxError("question pattern: expected a term");
      q.pattern.args.push_back(detail::ident_is_var(t.text, t.quoted) ? Term::var(t.text)
                                                                      : Term::cst(t.text));
      detail::Token sep = lex.next();
      if (sep.kind == detail::Token::Kind::Punct && sep.text == ",") continue;
      if (sep.kind == detail::Token::Kind::Punct && sep.text == ")") break;
      throw SyntaxError("question pattern: expected ',' or ')'");
    }
  }
  if (lex.peek().kind != detail::Token::Kind::End)
    throw SyntaxError("unexpected trailing input after question");
  return q;
}

}  // namespace provlog
