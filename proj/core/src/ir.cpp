#include "fog/ir.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <sstream>
#include <unordered_map>

namespace fog {

namespace {

constexpr Word kTableBase = kDataBase + 65536;

const char* const kOpNames[kNumOps] = {
    "MOV", "MOVI", "ADD", "SUB", "MUL", "XOR", "AND", "OR", "SHL", "SHR", "CMP", "LOAD",
    "STORE", "BR", "JMP", "JMPI", "SWJ", "CALL", "RET", "IN", "OUT", "HALT", "SWAP"};
const char* const kCondNames[6] = {"Z", "NZ", "LT", "GE", "GT", "LE"};

std::uint32_t bit(int r) { return 1u << r; }

bool is_alu(Op op) {
  switch (op) {
    case Op::ADD: case Op::SUB: case Op::MUL: case Op::XOR:
    case Op::AND: case Op::OR: case Op::SHL: case Op::SHR:
      return true;
    default:
      return false;
  }
}

}  // namespace

ParseError::ParseError(int l, const std::string& msg)
    : std::runtime_error("line " + std::to_string(l) + ": " + msg), line(l) {}

const char* op_name(Op op) { return kOpNames[static_cast<int>(op)]; }
const char* cond_name(Cond c) { return kCondNames[static_cast<int>(c)]; }

const char* edge_kind_name(EdgeKind k) {
  switch (k) {
    case EdgeKind::FALLTHROUGH: return "FALLTHROUGH";
    case EdgeKind::JUMP: return "JUMP";
    case EdgeKind::BRANCH_TAKEN: return "BRANCH_TAKEN";
    case EdgeKind::CALL: return "CALL";
    case EdgeKind::RETURN_LINK: return "RETURN_LINK";
    case EdgeKind::SWITCH_CASE: return "SWITCH_CASE";
    case EdgeKind::INDIRECT_RESOLVED: return "INDIRECT_RESOLVED";
  }
  return "?";
}

Cond negate(Cond c) {
  switch (c) {
    case Cond::Z: return Cond::NZ;
    case Cond::NZ: return Cond::Z;
    case Cond::LT: return Cond::GE;
    case Cond::GE: return Cond::LT;
    case Cond::GT: return Cond::LE;
    case Cond::LE: return Cond::GT;
  }
  return c;
}

bool eval_cond(Cond c, bool z, bool n) {
  switch (c) {
    case Cond::Z: return z;
    case Cond::NZ: return !z;
    case Cond::LT: return n;
    case Cond::GE: return !n;
    case Cond::GT: return !z && !n;
    case Cond::LE: return z || n;
  }
  return false;
}

bool is_control(Op op) {
  switch (op) {
    case Op::BR: case Op::JMP: case Op::JMPI: case Op::SWJ:
    case Op::CALL: case Op::RET: case Op::HALT:
      return true;
    default:
      return false;
  }
}

bool falls_through(const Instruction& last) {
  switch (last.op) {
    case Op::JMP: case Op::JMPI: case Op::RET: case Op::HALT:
      return false;
    case Op::SWJ:
      return false;  // the default target is an explicit edge
    default:
      return true;
  }
}

bool has_side_effect(Op op) {
  return op == Op::LOAD || op == Op::STORE || op == Op::IN || op == Op::OUT;
}

std::uint32_t uses(const Instruction& in) {
  std::uint32_t u = 0;
  auto reg_at = [&](int i) {
    if (i < in.nops && in.ops[i].is_reg()) u |= bit(in.ops[i].reg);
  };
  switch (in.op) {
    case Op::MOV: reg_at(1); break;
    case Op::MOVI: break;
    case Op::CMP: reg_at(0); reg_at(1); break;
    case Op::LOAD: reg_at(1); break;
    case Op::STORE: reg_at(0); reg_at(1); break;
    case Op::BR: u |= bit(kFlagsBit); break;
    case Op::JMPI: case Op::SWJ: case Op::OUT: reg_at(0); break;
    case Op::SWAP: reg_at(0); reg_at(1); break;
    default:
      if (is_alu(in.op)) { reg_at(1); reg_at(2); }
      break;
  }
  if (in.reads_flags) u |= bit(kFlagsBit);
  return u;
}

std::uint32_t defs(const Instruction& in) {
  std::uint32_t d = 0;
  switch (in.op) {
    case Op::MOV: case Op::MOVI: case Op::LOAD: case Op::IN:
      d |= bit(in.ops[0].reg);
      break;
    case Op::CMP: d |= bit(kFlagsBit); break;
    case Op::SWAP: d |= bit(in.ops[0].reg) | bit(in.ops[1].reg); break;
    default:
      if (is_alu(in.op)) d |= bit(in.ops[0].reg);
      break;
  }
  if (in.sets_flags) d |= bit(kFlagsBit);
  return d;
}

Instruction make_insn(Op op, std::initializer_list<Operand> ops, InsnId id) {
  Instruction in;
  in.id = id;
  in.op = op;
  in.nops = static_cast<std::uint8_t>(ops.size());
  std::copy(ops.begin(), ops.end(), in.ops.begin());
  if (op == Op::CMP) in.sets_flags = true;
  if (op == Op::BR) in.reads_flags = true;
  return in;
}

Instruction make_br(Cond c, BlockId target, InsnId id) {
  Instruction in = make_insn(Op::BR, {Operand::block(target)}, id);
  in.cond = c;
  return in;
}

// ---------------------------------------------------------------- Program

void Program::reindex() {
  pos.assign(next_block, -1);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    BlockId b = blocks[i].id;
    if (b >= pos.size()) pos.resize(b + 1, -1);
    pos[b] = static_cast<std::int32_t>(i);
  }
}

std::size_t Program::index_of(BlockId b) const {
  if (!has_block(b)) throw CfgError("unknown block id " + std::to_string(b));
  return static_cast<std::size_t>(pos[b]);
}

int Program::function_index(const std::string& name) const {
  for (std::size_t i = 0; i < functions.size(); ++i)
    if (functions[i].name == name) return static_cast<int>(i);
  return -1;
}

std::string Program::fresh_label(BlockId b) const { return "_b" + std::to_string(b); }

std::size_t Program::instruction_count() const {
  std::size_t n = 0;
  for (const auto& bb : blocks) n += bb.insns.size();
  return n;
}

Word Program::global_address(std::uint32_t g) const { return kDataBase + static_cast<Word>(g); }

Word Program::table_address(std::uint32_t t) const {
  Word a = kTableBase;
  for (std::uint32_t i = 0; i < t; ++i) a += static_cast<Word>(tables[i].entries.size());
  return a;
}

Word Program::data_end() const {
  return table_address(static_cast<std::uint32_t>(tables.size()));
}

// ---------------------------------------------------------------- parsing

namespace {

struct PendingOperand {
  Operand op;
  std::string label;  // unresolved name when op.kind == Label
};

struct PendingInsn {
  Instruction in;
  std::array<std::string, 3> labels;
  int line = 0;
  bool has_id = false;
};

struct PendingBlock {
  std::string label;
  bool has_id = false;
  BlockId id = 0;
  int func = -1;
  int line = 0;
  std::vector<PendingInsn> insns;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$';
}

bool is_ident(std::string_view s) {
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0])) || s[0] == '#') return false;
  return std::all_of(s.begin(), s.end(), is_ident_char);
}

bool parse_word(std::string_view s, Word& out) {
  s = trim(s);
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  if (s.empty()) return false;
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || p != s.data() + s.size()) return false;
  out = static_cast<Word>(neg ? (~v + 1) : v);
  return true;
}

bool parse_reg(std::string_view s, int& r) {
  s = trim(s);
  if (s.size() < 2 || (s[0] != 'r' && s[0] != 'R')) return false;
  int v = 0;
  auto [p, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v < 0 || v >= kNumRegs) return false;
  r = v;
  return true;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// Splits operands on commas outside brackets.
std::vector<std::string_view> split_operands(std::string_view s) {
  std::vector<std::string_view> out;
  s = trim(s);
  if (s.empty()) return out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '[') ++depth;
    if (s[i] == ']') --depth;
    if (s[i] == ',' && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.push_back(trim(s.substr(start)));
  return out;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}
  Program run();

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_, msg); }
  void directive(std::string_view s);
  void instruction(std::string_view s);
  void start_block(const std::string& label, bool has_id, BlockId id);
  PendingOperand operand(std::string_view s);
  Operand resolve(const std::string& name, const Operand& proto, int line, bool code_only);

  std::string_view text_;
  int line_ = 0;
  int archive_ = -1, object_ = -1, func_ = -1;
  bool block_open_ = false;
  bool after_control_ = false;
  std::vector<PendingBlock> blocks_;
  struct FuncDecl {
    std::string name;
    bool has_id = false;
    int id = 0;
    int archive = 0, object = 0;
  };
  std::vector<FuncDecl> funcs_;
  std::vector<Global> globals_;
  std::vector<std::pair<std::string, std::vector<std::string>>> tables_;
  std::vector<std::pair<int, int>> table_lines_;
  struct ITargets {
    InsnId insn;
    std::vector<std::string> labels;
    int line;
  };
  std::vector<ITargets> itargets_;
  std::unordered_map<std::string, std::size_t> block_names_;
};

void Parser::start_block(const std::string& label, bool has_id, BlockId id) {
  if (func_ < 0) fail("code before any .func directive (provenance directive missing)");
  PendingBlock b;
  b.label = label;
  b.has_id = has_id;
  b.id = id;
  b.func = func_;
  b.line = line_;
  if (!label.empty()) {
    if (block_names_.count(label)) fail("duplicate label '" + label + "'");
    block_names_[label] = blocks_.size();
  }
  blocks_.push_back(std::move(b));
  block_open_ = true;
  after_control_ = false;
}

void Parser::directive(std::string_view s) {
  auto toks = split_ws(s);
  std::string_view d = toks[0];
  auto need_int = [&](std::size_t i) {
    Word v;
    if (i >= toks.size() || !parse_word(toks[i], v)) fail("expected integer in " + std::string(d));
    return v;
  };
  if (d == ".archive") {
    archive_ = static_cast<int>(need_int(1));
    func_ = -1;
    block_open_ = false;
  } else if (d == ".object") {
    if (archive_ < 0) fail(".object before .archive (provenance directive missing)");
    object_ = static_cast<int>(need_int(1));
    func_ = -1;
    block_open_ = false;
  } else if (d == ".func") {
    if (archive_ < 0 || object_ < 0) fail(".func without .archive/.object (provenance directive missing)");
    if (toks.size() < 2 || !is_ident(toks[1])) fail("bad .func name");
    std::string name(toks[1]);
    FuncDecl fd{name, false, 0, archive_, object_};
    if (toks.size() > 2) {
      fd.has_id = true;
      fd.id = static_cast<int>(need_int(2));
    }
    int idx = -1;
    for (std::size_t i = 0; i < funcs_.size(); ++i)
      if (funcs_[i].name == name) idx = static_cast<int>(i);
    if (idx < 0) {
      funcs_.push_back(fd);
      idx = static_cast<int>(funcs_.size()) - 1;
    } else {
      auto& old = funcs_[idx];
      if (old.archive != archive_ || old.object != object_)
        fail("function '" + name + "' reopened with different provenance");
      if (fd.has_id && old.has_id && fd.id != old.id) fail("function '" + name + "' reopened with different id");
    }
    func_ = idx;
    block_open_ = false;
  } else if (d == ".word") {
    if (toks.size() != 3 || !is_ident(toks[1])) fail("expected .word name value");
    Word v;
    if (!parse_word(toks[2], v)) fail("bad .word value");
    globals_.push_back({std::string(toks[1]), v});
  } else if (d == ".table") {
    if (toks.size() < 2 || toks[1].back() != ':') fail("expected .table name: labels...");
    std::string name(toks[1].substr(0, toks[1].size() - 1));
    if (!is_ident(name)) fail("bad table name");
    std::vector<std::string> labels;
    for (std::size_t i = 2; i < toks.size(); ++i) labels.emplace_back(toks[i]);
    if (labels.empty()) fail("empty table");
    tables_.push_back({name, labels});
    table_lines_.push_back({line_, 0});
  } else if (d == ".itargets") {
    if (toks.size() < 2 || toks[1][0] != '@') fail("expected .itargets @id labels...");
    Word id;
    if (!parse_word(toks[1].substr(1), id)) fail("bad instruction id");
    ITargets it{static_cast<InsnId>(id), {}, line_};
    for (std::size_t i = 2; i < toks.size(); ++i) it.labels.emplace_back(toks[i]);
    itargets_.push_back(std::move(it));
  } else {
    fail("unknown directive " + std::string(d));
  }
}

PendingOperand Parser::operand(std::string_view s) {
  PendingOperand po;
  s = trim(s);
  int r;
  if (s.empty()) fail("empty operand");
  if (s[0] == '#') {
    Word v;
    if (!parse_word(s.substr(1), v)) fail("bad immediate '" + std::string(s) + "'");
    po.op = Operand::imm(v);
  } else if (parse_reg(s, r)) {
    po.op = Operand::r(r);
  } else if (is_ident(s)) {
    po.op.kind = OperandKind::Label;
    po.label = std::string(s);
  } else {
    fail("bad operand '" + std::string(s) + "'");
  }
  return po;
}

void Parser::instruction(std::string_view s) {
  if (func_ < 0) fail("instruction before any .func directive (provenance directive missing)");
  PendingInsn pi;
  pi.line = line_;
  // trailing @id
  auto at = s.rfind('@');
  if (at != std::string_view::npos) {
    Word id;
    if (!parse_word(s.substr(at + 1), id) || id <= 0) fail("bad instruction id");
    pi.in.id = static_cast<InsnId>(id);
    pi.has_id = true;
    s = trim(s.substr(0, at));
  }
  std::size_t sp = 0;
  while (sp < s.size() && !std::isspace(static_cast<unsigned char>(s[sp]))) ++sp;
  std::string mn(s.substr(0, sp));
  for (auto& c : mn) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  auto rest = trim(s.substr(sp));

  int opi = -1;
  bool sflag = false;
  for (int i = 0; i < kNumOps; ++i)
    if (mn == kOpNames[i]) opi = i;
  if (opi < 0 && mn.size() > 1 && mn.back() == 'S') {
    std::string base = mn.substr(0, mn.size() - 1);
    for (int i = 0; i < kNumOps; ++i)
      if (base == kOpNames[i]) opi = i;
    sflag = true;
  }
  if (opi < 0) fail("unknown mnemonic '" + mn + "'");
  Op op = static_cast<Op>(opi);
  if (sflag && (is_control(op) || op == Op::CMP || op == Op::SWAP || op == Op::STORE || op == Op::OUT))
    fail("flag-setting suffix not allowed on " + std::string(kOpNames[opi]));

  Instruction& in = pi.in;
  in.op = op;
  in.sets_flags = sflag || op == Op::CMP;
  in.reads_flags = op == Op::BR;

  auto ops = split_operands(rest);
  auto want = [&](std::size_t lo, std::size_t hi) {
    if (ops.size() < lo || ops.size() > hi)
      fail(std::string(kOpNames[opi]) + " expects " + std::to_string(lo) + " operand(s)");
  };
  auto set = [&](int i, const PendingOperand& po) {
    in.ops[i] = po.op;
    pi.labels[i] = po.label;
    in.nops = static_cast<std::uint8_t>(std::max<int>(in.nops, i + 1));
  };
  auto reg_operand = [&](int i, std::string_view t) {
    auto po = operand(t);
    if (!po.op.is_reg()) fail("expected register, got '" + std::string(t) + "'");
    set(i, po);
  };
  auto mem_operand = [&](std::string_view t) {
    t = trim(t);
    if (t.size() < 2 || t.front() != '[' || t.back() != ']') fail("expected [reg, #off]");
    auto inner = split_operands(t.substr(1, t.size() - 2));
    if (inner.empty() || inner.size() > 2) fail("expected [reg, #off]");
    reg_operand(1, inner[0]);
    PendingOperand off;
    off.op = Operand::imm(0);
    if (inner.size() == 2) {
      off = operand(inner[1]);
      if (!off.op.is_imm()) fail("memory offset must be immediate");
    }
    set(2, off);
  };

  switch (op) {
    case Op::MOV: case Op::SWAP:
      want(2, 2); reg_operand(0, ops[0]); reg_operand(1, ops[1]);
      break;
    case Op::MOVI: {
      want(2, 2); reg_operand(0, ops[0]);
      auto po = operand(ops[1]);
      if (po.op.is_reg()) fail("MOVI source must be immediate or label");
      set(1, po);
      break;
    }
    case Op::ADD: case Op::SUB: case Op::MUL: case Op::XOR:
    case Op::AND: case Op::OR: case Op::SHL: case Op::SHR: {
      want(3, 3); reg_operand(0, ops[0]); reg_operand(1, ops[1]);
      auto po = operand(ops[2]);
      if (po.op.is_label()) fail("ALU operand must be register or immediate");
      set(2, po);
      break;
    }
    case Op::CMP: {
      want(2, 2); reg_operand(0, ops[0]);
      auto po = operand(ops[1]);
      if (po.op.is_label()) fail("CMP operand must be register or immediate");
      set(1, po);
      break;
    }
    case Op::LOAD: case Op::STORE:
      want(2, 2); reg_operand(0, ops[0]); mem_operand(ops[1]);
      break;
    case Op::BR: {
      want(2, 2);
      std::string c(trim(ops[0]));
      int ci = -1;
      for (int i = 0; i < 6; ++i)
        if (c == kCondNames[i]) ci = i;
      if (ci < 0) fail("unknown condition '" + c + "'");
      in.cond = static_cast<Cond>(ci);
      auto po = operand(ops[1]);
      if (!po.op.is_label()) fail("BR target must be a label");
      set(0, po);
      break;
    }
    case Op::JMP: case Op::CALL: {
      want(1, 1);
      auto po = operand(ops[0]);
      if (!po.op.is_label()) fail("target must be a label");
      set(0, po);
      break;
    }
    case Op::JMPI: case Op::IN: case Op::OUT:
      want(1, 1); reg_operand(0, ops[0]);
      break;
    case Op::SWJ: {
      want(2, 3); reg_operand(0, ops[0]);
      auto t = operand(ops[1]);
      if (!t.op.is_label()) fail("SWJ table must be a label");
      set(1, t);
      if (ops.size() == 3) {
        auto dflt = operand(ops[2]);
        if (!dflt.op.is_label()) fail("SWJ default must be a label");
        set(2, dflt);
      }
      break;
    }
    case Op::RET: case Op::HALT:
      want(0, 0);
      break;
  }

  if (!block_open_ || after_control_) start_block("", false, 0);
  blocks_.back().insns.push_back(std::move(pi));
  after_control_ = is_control(op);
}

Program Parser::run() {
  std::size_t p = 0;
  while (p <= text_.size()) {
    std::size_t e = text_.find('\n', p);
    if (e == std::string_view::npos) e = text_.size();
    ++line_;
    std::string_view raw = text_.substr(p, e - p);
    p = e + 1;
    auto semi = raw.find(';');
    if (semi != std::string_view::npos) raw = raw.substr(0, semi);
    std::string_view s = trim(raw);
    if (s.empty()) {
      if (e == text_.size()) break;
      continue;
    }
    if (s[0] == '.') {
      directive(s);
      continue;
    }
    // label?
    std::size_t i = 0;
    while (i < s.size() && is_ident_char(s[i])) ++i;
    if (i > 0 && i < s.size() && s[i] == ':') {
      std::string label(s.substr(0, i));
      if (!is_ident(label)) fail("bad label '" + label + "'");
      s = trim(s.substr(i + 1));
      bool has_id = false;
      BlockId id = 0;
      if (!s.empty() && s[0] == '@') {
        std::size_t j = 1;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        Word v;
        if (!parse_word(s.substr(1, j - 1), v) || v < 0) fail("bad block id");
        has_id = true;
        id = static_cast<BlockId>(v);
        s = trim(s.substr(j));
      }
      start_block(label, has_id, id);
      if (!s.empty()) instruction(s);
    } else {
      instruction(s);
    }
    if (e == text_.size()) break;
  }

  Program prog;
  if (funcs_.empty()) throw ParseError(line_, "no functions (provenance directive missing)");

  // ids
  std::set<BlockId> used_b;
  std::set<InsnId> used_i;
  BlockId max_b = 0;
  InsnId max_i = 0;
  for (auto& b : blocks_) {
    if (b.has_id) {
      if (!used_b.insert(b.id).second) throw ParseError(b.line, "duplicate block id @" + std::to_string(b.id));
      max_b = std::max(max_b, b.id + 1);
    }
    for (auto& pi : b.insns)
      if (pi.has_id) {
        if (!used_i.insert(pi.in.id).second)
          throw ParseError(pi.line, "duplicate instruction id @" + std::to_string(pi.in.id));
        max_i = std::max(max_i, pi.in.id + 1);
      }
  }
  prog.next_block = max_b;
  prog.next_insn = std::max<InsnId>(max_i, 1);
  for (auto& b : blocks_) {
    if (!b.has_id) b.id = prog.fresh_block();
    for (auto& pi : b.insns)
      if (!pi.has_id) pi.in.id = prog.fresh_insn();
  }

  // functions
  std::set<int> used_f;
  int next_f = 0;
  for (auto& f : funcs_)
    if (f.has_id) {
      if (!used_f.insert(f.id).second) throw ParseError(0, "duplicate function id " + std::to_string(f.id));
      next_f = std::max(next_f, f.id + 1);
    }
  for (auto& f : funcs_) {
    Function fn;
    fn.name = f.name;
    fn.id = f.has_id ? f.id : next_f++;
    fn.prov = {f.archive, f.object, fn.id};
    auto it = block_names_.find(f.name);
    if (it == block_names_.end()) throw ParseError(0, "function '" + f.name + "' has no entry label");
    auto& eb = blocks_[it->second];
    if (funcs_[eb.func].name != f.name) throw ParseError(eb.line, "entry label of '" + f.name + "' outside its function");
    fn.entry = eb.id;
    prog.functions.push_back(fn);
  }
  int mi = prog.function_index("main");
  prog.entry_function = mi >= 0 ? mi : 0;

  prog.globals = globals_;
  std::unordered_map<std::string, std::uint32_t> tab_idx, glob_idx;
  for (std::size_t i = 0; i < globals_.size(); ++i) {
    if (!glob_idx.emplace(globals_[i].name, static_cast<std::uint32_t>(i)).second)
      throw ParseError(0, "duplicate global '" + globals_[i].name + "'");
    if (block_names_.count(globals_[i].name)) throw ParseError(0, "name clash '" + globals_[i].name + "'");
  }
  for (std::size_t i = 0; i < tables_.size(); ++i) {
    if (!tab_idx.emplace(tables_[i].first, static_cast<std::uint32_t>(i)).second ||
        glob_idx.count(tables_[i].first) || block_names_.count(tables_[i].first))
      throw ParseError(table_lines_[i].first, "duplicate name '" + tables_[i].first + "'");
    Table t;
    t.name = tables_[i].first;
    for (auto& l : tables_[i].second) {
      auto it = block_names_.find(l);
      if (it == block_names_.end()) throw ParseError(table_lines_[i].first, "dangling label '" + l + "'");
      t.entries.push_back(blocks_[it->second].id);
    }
    prog.tables.push_back(std::move(t));
  }

  for (auto& b : blocks_) {
    BasicBlock bb;
    bb.id = b.id;
    bb.label = b.label;
    const auto& fd = prog.functions[b.func];
    bb.prov = fd.prov;
    for (auto& pi : b.insns) {
      for (int k = 0; k < pi.in.nops; ++k) {
        if (!pi.in.ops[k].is_label()) continue;
        const std::string& name = pi.labels[k];
        Operand o;
        if (auto it = block_names_.find(name); it != block_names_.end()) {
          o = Operand::block(blocks_[it->second].id);
        } else if (auto t = tab_idx.find(name); t != tab_idx.end()) {
          o = Operand::table(t->second);
        } else if (auto g = glob_idx.find(name); g != glob_idx.end()) {
          o = Operand::global(g->second);
        } else {
          throw ParseError(pi.line, "dangling label '" + name + "'");
        }
        Op op = pi.in.op;
        bool need_code = op == Op::BR || op == Op::JMP || op == Op::CALL || (op == Op::SWJ && k == 2);
        if (need_code && !o.is_code_label()) throw ParseError(pi.line, "'" + name + "' is not a code label");
        if (op == Op::SWJ && k == 1 && (o.lk != LabelKind::Table))
          throw ParseError(pi.line, "'" + name + "' is not a table");
        pi.in.ops[k] = o;
      }
      if (pi.in.op == Op::CALL) {
        BlockId tgt = static_cast<BlockId>(pi.in.ops[0].value);
        bool ok = false;
        for (auto& f : prog.functions) ok |= f.entry == tgt;
        if (!ok) throw ParseError(pi.line, "CALL target is not a function entry");
      }
      bb.insns.push_back(pi.in);
    }
    prog.blocks.push_back(std::move(bb));
  }
  for (auto& f : prog.functions)
    for (auto& bb : prog.blocks)
      if (bb.id == f.entry) bb.is_entry = true;
  // function order follows ids, so a shuffled layout reads back unchanged
  std::stable_sort(prog.functions.begin(), prog.functions.end(),
                   [](const Function& a, const Function& b) { return a.id < b.id; });
  mi = prog.function_index("main");
  prog.entry_function = mi >= 0 ? mi : 0;

  for (auto& it : itargets_) {
    if (!used_i.count(it.insn)) throw ParseError(it.line, "unknown instruction in .itargets");
    auto& v = prog.indirect_targets[it.insn];
    for (auto& l : it.labels) {
      auto f = block_names_.find(l);
      if (f == block_names_.end()) throw ParseError(it.line, "dangling label '" + l + "'");
      v.push_back(blocks_[f->second].id);
    }
  }

  // unlabeled blocks get generated labels that do not clash
  for (auto& bb : prog.blocks) {
    if (!bb.label.empty()) continue;
    std::string l = prog.fresh_label(bb.id);
    while (block_names_.count(l) || glob_idx.count(l) || tab_idx.count(l)) l += "_";
    bb.label = l;
    block_names_[l] = 0;
  }
  prog.reindex();
  if (prog.blocks.empty() || prog.blocks.front().id != prog.entry_block()) {
    // the entry function's entry block does not need to come first in text,
    // but execution starts at it regardless
  }
  return prog;
}

}  // namespace

Program parse_program(std::string_view text) {
  Parser p(text);
  Program prog = p.run();
  build_cfg(prog);
  return prog;
}

// ---------------------------------------------------------------- serialization

namespace {

std::string label_name(const Program& p, const Operand& o) {
  switch (o.lk) {
    case LabelKind::Block: return p.block(static_cast<BlockId>(o.value)).label;
    case LabelKind::Table: return p.tables.at(o.value).name;
    case LabelKind::Global: return p.globals.at(o.value).name;
  }
  return "?";
}

std::string fmt_operand(const Program& p, const Operand& o) {
  switch (o.kind) {
    case OperandKind::Reg: return "r" + std::to_string(o.reg);
    case OperandKind::Imm: return "#" + std::to_string(o.value);
    case OperandKind::Label: return label_name(p, o);
    default: return "";
  }
}

}  // namespace

std::string format_insn(const Program& p, const Instruction& in) {
  std::string s = op_name(in.op);
  if (in.sets_flags && in.op != Op::CMP) s += 'S';
  switch (in.op) {
    case Op::LOAD: case Op::STORE:
      s += " " + fmt_operand(p, in.ops[0]) + ", [" + fmt_operand(p, in.ops[1]) + ", " +
           fmt_operand(p, in.ops[2]) + "]";
      break;
    case Op::BR:
      s += std::string(" ") + cond_name(in.cond) + ", " + fmt_operand(p, in.ops[0]);
      break;
    default:
      for (int k = 0; k < in.nops; ++k) s += (k ? ", " : " ") + fmt_operand(p, in.ops[k]);
      break;
  }
  return s;
}

std::string serialize_program(const Program& p) {
  std::ostringstream os;
  for (const auto& g : p.globals) os << ".word " << g.name << " " << g.value << "\n";
  for (const auto& t : p.tables) {
    os << ".table " << t.name << ":";
    for (BlockId b : t.entries) os << " " << p.block(b).label;
    os << "\n";
  }
  std::map<int, const Function*> by_id;
  for (const auto& f : p.functions) by_id[f.id] = &f;
  int cur = -1;
  for (const auto& bb : p.blocks) {
    if (bb.prov.function_id != cur) {
      cur = bb.prov.function_id;
      auto it = by_id.find(cur);
      if (it == by_id.end()) throw CfgError("block " + bb.label + " has unknown function id");
      os << ".archive " << bb.prov.archive_id << "\n.object " << bb.prov.object_id << "\n.func "
         << it->second->name << " " << cur << "\n";
    }
    os << bb.label << ": @" << bb.id << "\n";
    for (const auto& in : bb.insns) os << "    " << format_insn(p, in) << " @" << in.id << "\n";
  }
  for (const auto& [id, ts] : p.indirect_targets) {
    os << ".itargets @" << id;
    for (BlockId b : ts) os << " " << p.block(b).label;
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------- CFG

void build_cfg(Program& p) {
  p.reindex();
  const std::size_t n = p.blocks.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto& bb = p.blocks[i];
    bb.succs.clear();
    auto add = [&](EdgeKind k, BlockId t, InsnId src) {
      if (!p.has_block(t)) throw CfgError("transfer to undefined block from " + bb.label);
      for (const auto& e : bb.succs)
        if (e.kind == k && e.target == t) return;
      Truth tr = p.fake.count({src, k, t}) ? Truth::FAKE_EDGE : Truth::TRUE_EDGE;
      bb.succs.push_back({k, t, tr});
    };
    auto next = [&]() -> BlockId {
      if (i + 1 >= n) throw CfgError("block " + bb.label + " falls off the end of the program");
      return p.blocks[i + 1].id;
    };
    if (bb.insns.empty()) {
      add(EdgeKind::FALLTHROUGH, next(), kBlockKeyBit | bb.id);
      continue;
    }
    const auto& last = bb.insns.back();
    for (std::size_t k = 0; k + 1 < bb.insns.size(); ++k)
      if (is_control(bb.insns[k].op)) throw CfgError("control transfer in the middle of " + bb.label);
    switch (last.op) {
      case Op::BR:
        add(EdgeKind::BRANCH_TAKEN, static_cast<BlockId>(last.ops[0].value), last.id);
        add(EdgeKind::FALLTHROUGH, next(), last.id);
        break;
      case Op::JMP:
        add(EdgeKind::JUMP, static_cast<BlockId>(last.ops[0].value), last.id);
        break;
      case Op::CALL:
        add(EdgeKind::CALL, static_cast<BlockId>(last.ops[0].value), last.id);
        add(EdgeKind::RETURN_LINK, next(), last.id);
        break;
      case Op::SWJ: {
        const auto& t = p.tables.at(last.ops[1].value);
        for (BlockId b : t.entries) add(EdgeKind::SWITCH_CASE, b, last.id);
        if (last.nops > 2) add(EdgeKind::SWITCH_CASE, static_cast<BlockId>(last.ops[2].value), last.id);
        break;
      }
      case Op::JMPI: {
        auto it = p.indirect_targets.find(last.id);
        if (it != p.indirect_targets.end())
          for (BlockId b : it->second) add(EdgeKind::INDIRECT_RESOLVED, b, last.id);
        break;
      }
      case Op::RET: case Op::HALT:
        break;
      default:
        add(EdgeKind::FALLTHROUGH, next(), last.id);
        break;
    }
  }
}

std::pair<BlockId, BlockId> split_block(Program& p, BlockId b, std::size_t index) {
  std::size_t i = p.index_of(b);
  auto& up = p.blocks[i];
  if (index == 0 || index >= up.insns.size())
    throw CfgError("split index " + std::to_string(index) + " out of range for " + up.label);
  BasicBlock low;
  low.id = p.fresh_block();
  low.label = p.fresh_label(low.id);
  low.prov = up.prov;
  low.insns.assign(up.insns.begin() + static_cast<std::ptrdiff_t>(index), up.insns.end());
  up.insns.resize(index);
  p.blocks.insert(p.blocks.begin() + static_cast<std::ptrdiff_t>(i) + 1, std::move(low));
  BlockId lid = p.blocks[i + 1].id;
  build_cfg(p);
  return {b, lid};
}

namespace {

// Counts references to block b from instructions, tables and hints.
bool block_referenced(const Program& p, BlockId b) {
  for (const auto& bb : p.blocks)
    for (const auto& in : bb.insns)
      for (int k = 0; k < in.nops; ++k)
        if (in.ops[k].is_code_label() && static_cast<BlockId>(in.ops[k].value) == b) return true;
  for (const auto& t : p.tables)
    for (BlockId e : t.entries)
      if (e == b) return true;
  for (const auto& [id, ts] : p.indirect_targets)
    for (BlockId e : ts)
      if (e == b) return true;
  for (const auto& f : p.functions)
    if (f.entry == b) return true;
  return false;
}

}  // namespace

void merge_blocks(Program& p, BlockId upper, BlockId lower) {
  std::size_t i = p.index_of(upper);
  if (i + 1 >= p.blocks.size() || p.blocks[i + 1].id != lower)
    throw CfgError("merge: lower block does not follow upper");
  auto& up = p.blocks[i];
  if (!up.insns.empty() && is_control(up.insns.back().op))
    throw CfgError("merge: upper block ends in a control transfer");
  if (block_referenced(p, lower)) throw CfgError("merge: lower block is referenced elsewhere");
  auto& low = p.blocks[i + 1];
  up.insns.insert(up.insns.end(), low.insns.begin(), low.insns.end());
  p.blocks.erase(p.blocks.begin() + static_cast<std::ptrdiff_t>(i) + 1);
  build_cfg(p);
}

std::map<BlockId, BlockId> fallthrough_targets(const Program& p) {
  std::map<BlockId, BlockId> ft;
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto& bb = p.blocks[i];
    bool f = bb.insns.empty() || falls_through(bb.insns.back());
    if (f && i + 1 < p.blocks.size()) ft[bb.id] = p.blocks[i + 1].id;
  }
  return ft;
}

void relayout(Program& p, const std::vector<BlockId>& order, const std::map<BlockId, BlockId>& ft_override) {
  auto ft = fallthrough_targets(p);
  for (auto& [b, t] : ft_override) ft[b] = t;
  if (order.size() != p.blocks.size()) throw CfgError("relayout: order is not a permutation");
  std::vector<BasicBlock> nb;
  nb.reserve(order.size() + 16);
  std::vector<char> seen(p.next_block, 0);
  for (BlockId b : order) {
    if (!p.has_block(b) || seen[b]) throw CfgError("relayout: order is not a permutation");
    seen[b] = 1;
    nb.push_back(std::move(p.blocks[p.index_of(b)]));
  }
  std::vector<BasicBlock> out;
  out.reserve(nb.size() + 64);
  for (std::size_t i = 0; i < nb.size(); ++i) {
    out.push_back(std::move(nb[i]));
    auto& bb = out.back();
    auto it = ft.find(bb.id);
    if (it == ft.end()) continue;
    BlockId t = it->second;
    if (i + 1 < nb.size() && nb[i + 1].id == t) continue;
    InsnId src = bb.insns.empty() ? (kBlockKeyBit | bb.id) : bb.insns.back().id;
    if (p.fake.count({src, EdgeKind::FALLTHROUGH, t}))
      throw CfgError("relayout: cannot repair a fake fall-through out of " + bb.label);
    bool ctl = !bb.insns.empty() && is_control(bb.insns.back().op);
    if (!ctl) {
      bb.insns.push_back(make_insn(Op::JMP, {Operand::block(t)}, p.fresh_insn()));
    } else {
      BasicBlock j;
      j.id = p.fresh_block();
      j.label = p.fresh_label(j.id);
      j.prov = bb.prov;
      j.insns.push_back(make_insn(Op::JMP, {Operand::block(t)}, p.fresh_insn()));
      out.push_back(std::move(j));
    }
  }
  p.blocks = std::move(out);
  build_cfg(p);
}

BlockId strip_trampoline(Program& p, BlockId b) {
  std::size_t i = p.index_of(b);
  if (i + 1 >= p.blocks.size()) return kNoBlock;
  const auto& bb = p.blocks[i];
  if (!bb.insns.empty() && !falls_through(bb.insns.back())) return kNoBlock;
  const auto& nx = p.blocks[i + 1];
  if (nx.insns.size() != 1 || nx.insns[0].op != Op::JMP || nx.is_entry) return kNoBlock;
  if (p.pinned.count(nx.insns[0].id)) return kNoBlock;
  if (block_referenced(p, nx.id)) return kNoBlock;
  BlockId t = static_cast<BlockId>(nx.insns[0].ops[0].value);
  if (t == nx.id) return kNoBlock;
  p.blocks.erase(p.blocks.begin() + static_cast<std::ptrdiff_t>(i) + 1);
  p.reindex();
  return t;
}

std::map<BlockId, std::vector<std::pair<BlockId, EdgeKind>>> predecessors(const Program& p) {
  std::map<BlockId, std::vector<std::pair<BlockId, EdgeKind>>> pr;
  for (const auto& bb : p.blocks)
    for (const auto& e : bb.succs) pr[e.target].push_back({bb.id, e.kind});
  return pr;
}

std::set<BlockId> address_taken(const Program& p) {
  std::set<BlockId> s;
  for (const auto& t : p.tables) s.insert(t.entries.begin(), t.entries.end());
  for (const auto& bb : p.blocks)
    for (const auto& in : bb.insns)
      if (in.op == Op::MOVI && in.ops[1].is_code_label()) s.insert(static_cast<BlockId>(in.ops[1].value));
  return s;
}

bool structurally_equal(const Program& a, const Program& b) {
  if (a.blocks.size() != b.blocks.size() || a.functions.size() != b.functions.size()) return false;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    const auto &x = a.blocks[i], &y = b.blocks[i];
    if (x.id != y.id || x.label != y.label || !(x.prov == y.prov) || x.is_entry != y.is_entry ||
        !(x.insns == y.insns) || !(x.succs == y.succs))
      return false;
  }
  for (std::size_t i = 0; i < a.functions.size(); ++i) {
    const auto &x = a.functions[i], &y = b.functions[i];
    if (x.name != y.name || x.id != y.id || x.entry != y.entry || !(x.prov == y.prov)) return false;
  }
  if (a.globals.size() != b.globals.size() || a.tables.size() != b.tables.size()) return false;
  for (std::size_t i = 0; i < a.globals.size(); ++i)
    if (a.globals[i].name != b.globals[i].name || a.globals[i].value != b.globals[i].value) return false;
  for (std::size_t i = 0; i < a.tables.size(); ++i)
    if (a.tables[i].name != b.tables[i].name || a.tables[i].entries != b.tables[i].entries) return false;
  return a.entry_function == b.entry_function && a.indirect_targets == b.indirect_targets;
}

}  // namespace fog
