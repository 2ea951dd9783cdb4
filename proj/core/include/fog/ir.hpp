#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace fog {

using Word = std::int64_t;
using BlockId = std::uint32_t;
using InsnId = std::uint32_t;

inline constexpr BlockId kNoBlock = 0xffffffffu;
inline constexpr int kNumRegs = 16;
inline constexpr int kFlagsBit = 16;        // liveness bit for Z/N
inline constexpr Word kGuardLimit = 4096;   // addresses below are unmapped
inline constexpr Word kDataBase = 4096;
inline constexpr Word kCodeBase = Word{1} << 20;

enum class Op : std::uint8_t {
  MOV, MOVI, ADD, SUB, MUL, XOR, AND, OR, SHL, SHR, CMP,
  LOAD, STORE, BR, JMP, JMPI, SWJ, CALL, RET, IN, OUT, HALT, SWAP
};
inline constexpr int kNumOps = 23;

enum class Cond : std::uint8_t { Z, NZ, LT, GE, GT, LE };

enum class OperandKind : std::uint8_t { None, Reg, Imm, Label };
enum class LabelKind : std::uint8_t { Block, Table, Global };

struct Operand {
  OperandKind kind = OperandKind::None;
  LabelKind lk = LabelKind::Block;
  std::uint8_t reg = 0;
  Word value = 0;  // immediate, or label id (block id / table index / global index)

  static Operand r(int reg) { Operand o; o.kind = OperandKind::Reg; o.reg = static_cast<std::uint8_t>(reg); return o; }
  static Operand imm(Word v) { Operand o; o.kind = OperandKind::Imm; o.value = v; return o; }
  static Operand block(BlockId b) { Operand o; o.kind = OperandKind::Label; o.lk = LabelKind::Block; o.value = b; return o; }
  static Operand table(std::uint32_t t) { Operand o; o.kind = OperandKind::Label; o.lk = LabelKind::Table; o.value = t; return o; }
  static Operand global(std::uint32_t g) { Operand o; o.kind = OperandKind::Label; o.lk = LabelKind::Global; o.value = g; return o; }

  bool is_reg() const { return kind == OperandKind::Reg; }
  bool is_imm() const { return kind == OperandKind::Imm; }
  bool is_label() const { return kind == OperandKind::Label; }
  bool is_code_label() const { return is_label() && lk == LabelKind::Block; }
  bool operator==(const Operand&) const = default;
};

struct Instruction {
  InsnId id = 0;
  Op op = Op::HALT;
  Cond cond = Cond::Z;
  bool sets_flags = false;
  bool reads_flags = false;
  std::uint8_t nops = 0;
  std::array<Operand, 3> ops{};

  bool operator==(const Instruction&) const = default;
};

// Register use/def helpers. Bits 0..15 are registers, bit 16 is the flags register.
std::uint32_t uses(const Instruction& in);
std::uint32_t defs(const Instruction& in);
bool is_control(Op op);
bool falls_through(const Instruction& last);
bool has_side_effect(Op op);  // memory or I/O
Cond negate(Cond c);
const char* op_name(Op op);
const char* cond_name(Cond c);
bool eval_cond(Cond c, bool z, bool n);

enum class EdgeKind : std::uint8_t {
  FALLTHROUGH, JUMP, BRANCH_TAKEN, CALL, RETURN_LINK, SWITCH_CASE, INDIRECT_RESOLVED
};
enum class Truth : std::uint8_t { TRUE_EDGE, FAKE_EDGE };
const char* edge_kind_name(EdgeKind k);

struct Edge {
  EdgeKind kind = EdgeKind::FALLTHROUGH;
  BlockId target = kNoBlock;
  Truth truth = Truth::TRUE_EDGE;
  bool operator==(const Edge&) const = default;
};

struct Provenance {
  int archive_id = 0;
  int object_id = 0;
  int function_id = 0;
  bool operator==(const Provenance&) const = default;
};

struct BasicBlock {
  BlockId id = kNoBlock;
  std::string label;
  std::vector<Instruction> insns;
  std::vector<Edge> succs;
  Provenance prov;
  bool is_entry = false;
};

struct Function {
  std::string name;
  int id = 0;
  BlockId entry = kNoBlock;
  Provenance prov;
};

struct Global {
  std::string name;
  Word value = 0;
};

struct Table {
  std::string name;
  std::vector<BlockId> entries;
};

// Ground-truth key of a fake edge: (source instruction, kind, destination).
// A fall-through out of a block without a control instruction uses
// kBlockKeyBit | block id as its source.
inline constexpr InsnId kBlockKeyBit = 0x80000000u;
struct FakeKey {
  InsnId src = 0;
  EdgeKind kind = EdgeKind::FALLTHROUGH;
  BlockId dst = kNoBlock;
  auto operator<=>(const FakeKey&) const = default;
};

struct ParseError : std::runtime_error {
  int line;
  ParseError(int line, const std::string& msg);
};
struct CfgError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Program {
  std::vector<BasicBlock> blocks;  // layout order
  std::vector<Function> functions;
  std::vector<Global> globals;
  std::vector<Table> tables;
  int entry_function = 0;  // index into functions
  std::set<FakeKey> fake;
  std::map<InsnId, std::vector<BlockId>> indirect_targets;  // JMPI hints
  std::unordered_set<InsnId> pinned;  // instructions transforms must not move
  InsnId next_insn = 1;
  BlockId next_block = 0;

  // block id -> layout position; refreshed by reindex()
  std::vector<std::int32_t> pos;

  void reindex();
  bool has_block(BlockId b) const { return b < pos.size() && pos[b] >= 0; }
  std::size_t index_of(BlockId b) const;
  BasicBlock& block(BlockId b) { return blocks[index_of(b)]; }
  const BasicBlock& block(BlockId b) const { return blocks[index_of(b)]; }
  BlockId entry_block() const { return functions.at(entry_function).entry; }
  int function_index(const std::string& name) const;

  InsnId fresh_insn() { return next_insn++; }
  BlockId fresh_block() { return next_block++; }
  std::string fresh_label(BlockId b) const;

  std::size_t instruction_count() const;
  Word global_address(std::uint32_t g) const;
  Word table_address(std::uint32_t t) const;
  Word data_end() const;
};

Instruction make_insn(Op op, std::initializer_list<Operand> ops, InsnId id = 0);
Instruction make_br(Cond c, BlockId target, InsnId id = 0);

Program parse_program(std::string_view text);
std::string serialize_program(const Program& p);
std::string format_insn(const Program& p, const Instruction& in);

// Populates every block's succs from its instructions, layout and the fake set.
void build_cfg(Program& p);

// Splits the block at `index` (0 < index < size). The upper half keeps the id
// and label; the lower half gets a fresh id and is placed right after.
std::pair<BlockId, BlockId> split_block(Program& p, BlockId b, std::size_t index);
// Inverse of split_block: lower must follow upper, upper must fall through and
// lower must not be referenced by anything else.
void merge_blocks(Program& p, BlockId upper, BlockId lower);

// Logical fall-through target of every block that has one, under the current layout.
std::map<BlockId, BlockId> fallthrough_targets(const Program& p);

// Re-lays out blocks in `order` and repairs broken fall-throughs: a JMP is
// appended to blocks ending in a non-control instruction, and a JMP-only block
// is inserted after BR/CALL blocks. `ft` gives the intended fall-through
// targets (missing entries: keep the current logical target).
void relayout(Program& p, const std::vector<BlockId>& order,
              const std::map<BlockId, BlockId>& ft_override = {});

// If the block after `b` is a repair trampoline (single JMP, only reached from
// b's fall-through), returns its JMP target and deletes it; else kNoBlock.
BlockId strip_trampoline(Program& p, BlockId b);

// Predecessor lists over all edges (after build_cfg).
std::map<BlockId, std::vector<std::pair<BlockId, EdgeKind>>> predecessors(const Program& p);

// Blocks whose address is taken (table entries, MOVI label operands).
std::set<BlockId> address_taken(const Program& p);

bool structurally_equal(const Program& a, const Program& b);

}  // namespace fog
