#include "fgp/msgio.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fgp::msgio {

std::string complex_token(gmp::Complex v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g%+.17gj", v.real(), v.imag());
  return buf;
}

gmp::Complex parse_complex_token(const std::string& token) {
  if (token.empty() || token.back() != 'j') {
    throw Error(ErrorCode::Io, "bad complex token '" + token + "'");
  }
  // Split at the sign of the imaginary part: the last +/- that is not
  // an exponent sign and not the leading sign.
  size_t split = std::string::npos;
  for (size_t i = token.size() - 1; i > 0; --i) {
    char ch = token[i];
    if ((ch == '+' || ch == '-') && token[i - 1] != 'e' && token[i - 1] != 'E') {
      split = i;
      break;
    }
  }
  if (split == std::string::npos) {
    throw Error(ErrorCode::Io, "bad complex token '" + token + "'");
  }
  try {
    double re = std::stod(token.substr(0, split));
    double im = std::stod(token.substr(split, token.size() - split - 1));
    return {re, im};
  } catch (const std::exception&) {
    throw Error(ErrorCode::Io, "bad complex token '" + token + "'");
  }
}

void write_message(std::ostream& os, const gmp::GaussianMessage& msg) {
  const auto n = msg.dim();
  os << "msg " << n << ' '
     << (msg.param == gmp::Param::MeanCov ? "MeanCov" : "WeightedMean")
     << '\n';
  for (Eigen::Index i = 0; i < n; ++i) {
    os << complex_token(msg.mean(i)) << (i + 1 < n ? " " : "");
  }
  os << '\n';
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      os << complex_token(msg.cov(r, c)) << (c + 1 < n ? " " : "");
    }
    os << '\n';
  }
}

gmp::GaussianMessage read_message(std::istream& is) {
  std::string kind;
  if (!(is >> kind) || kind != "msg") {
    throw Error(ErrorCode::Io, "expected 'msg' header");
  }
  Eigen::Index n = 0;
  std::string form;
  if (!(is >> n >> form) || n < 0) {
    throw Error(ErrorCode::Io, "bad msg header");
  }
  gmp::Param param;
  if (form == "MeanCov") {
    param = gmp::Param::MeanCov;
  } else if (form == "WeightedMean") {
    param = gmp::Param::WeightedMean;
  } else {
    throw Error(ErrorCode::Io, "bad msg form '" + form + "'");
  }
  gmp::CVector mean(n);
  gmp::CMatrix cov(n, n);
  std::string tok;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(is >> tok)) throw Error(ErrorCode::Io, "truncated msg mean");
    mean(i) = parse_complex_token(tok);
  }
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) {
      if (!(is >> tok)) throw Error(ErrorCode::Io, "truncated msg matrix");
      cov(r, c) = parse_complex_token(tok);
    }
  return {std::move(mean), std::move(cov), param};
}

void write_matrix(std::ostream& os, const gmp::CMatrix& m) {
  os << "mat " << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      os << complex_token(m(r, c)) << (c + 1 < m.cols() ? " " : "");
    }
    os << '\n';
  }
}

gmp::CMatrix read_matrix(std::istream& is) {
  std::string kind;
  if (!(is >> kind) || kind != "mat") {
    throw Error(ErrorCode::Io, "expected 'mat' header");
  }
  Eigen::Index rows = 0, cols = 0;
  if (!(is >> rows >> cols) || rows < 0 || cols < 0) {
    throw Error(ErrorCode::Io, "bad mat header");
  }
  gmp::CMatrix m(rows, cols);
  std::string tok;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(is >> tok)) throw Error(ErrorCode::Io, "truncated mat");
      m(r, c) = parse_complex_token(tok);
    }
  return m;
}

std::string message_to_string(const gmp::GaussianMessage& msg) {
  std::ostringstream os;
  write_message(os, msg);
  return os.str();
}

gmp::GaussianMessage message_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_message(is);
}

std::string matrix_to_string(const gmp::CMatrix& m) {
  std::ostringstream os;
  write_matrix(os, m);
  return os.str();
}

gmp::CMatrix matrix_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_matrix(is);
}

std::string words_to_hex(const std::vector<std::uint32_t>& words) {
  std::string out;
  char buf[16];
  for (std::uint32_t w : words) {
    std::snprintf(buf, sizeof(buf), "%08x\n", w);
    out += buf;
  }
  return out;
}

std::vector<std::uint32_t> hex_to_words(const std::string& text) {
  std::vector<std::uint32_t> words;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    if (tok.size() > 8 ||
        tok.find_first_not_of("0123456789abcdef") != std::string::npos) {
      throw Error(ErrorCode::Io, "bad hex word '" + tok + "'");
    }
    words.push_back(std::uint32_t(std::stoul(tok, nullptr, 16)));
  }
  return words;
}

void save_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot open '" + path + "' for write");
  os << text;
  if (!os) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

std::string load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace fgp::msgio
