#include "fdctmc/lang.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <stdexcept>

namespace fdctmc::lang {

std::string Expr::render() const {
    using K = Kind;
    auto bin = [&](const char* op) { return "(" + lhs->render() + op + rhs->render() + ")"; };
    switch (kind) {
        case K::Number: {
            char buf[64];
            auto [p, ec] = std::to_chars(buf, buf + sizeof buf, number);
            return std::string(buf, p);
        }
        case K::Ident: return ident;
        case K::BoolLit: return boolValue ? "true" : "false";
        case K::Neg: return "(-" + lhs->render() + ")";
        case K::Not: return "!" + lhs->render();
        case K::Add: return bin("+");
        case K::Sub: return bin("-");
        case K::Mul: return bin("*");
        case K::Div: return bin("/");
        case K::Eq: return bin("=");
        case K::Ne: return bin("!=");
        case K::Lt: return bin("<");
        case K::Le: return bin("<=");
        case K::Gt: return bin(">");
        case K::Ge: return bin(">=");
        case K::And: return bin("&");
        case K::Or: return bin("|");
    }
    return "?";
}

namespace {

enum class Tok {
    Ident, Number, String,
    LBracket, RBracket, LParen, RParen,
    Semi, Colon, Comma, Prime, DotDot,
    Arrow,     // ->
    DDash,     // --
    Plus, Minus, Star, Slash,
    Eq, Ne, Lt, Le, Gt, Ge,
    Amp, Pipe, Bang,
    Assign,    // only produced as Eq; kept for clarity
    End
};

struct Token {
    Tok kind;
    std::string text;
    double number = 0.0;
    int line = 1, column = 1;
};

struct ParseError {
    std::string message;
    int line, column;
};

class Lexer {
public:
    explicit Lexer(const std::string& src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skipWs();
            if (pos_ >= src_.size()) break;
            int line = line_, col = col_;
            char c = src_[pos_];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                std::string id;
                while (pos_ < src_.size() &&
                       (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                    id += src_[pos_++], ++col_;
                out.push_back({Tok::Ident, id, 0.0, line, col});
            } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                       (c == '.' && pos_ + 1 < src_.size() &&
                        std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
                std::size_t start = pos_;
                while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])))) advance();
                if (pos_ + 1 < src_.size() && src_[pos_] == '.' && src_[pos_ + 1] == '.') {
                    // leave ".." for the range rule
                } else if (pos_ < src_.size() && src_[pos_] == '.') {
                    advance();
                    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
                }
                if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
                    std::size_t save = pos_;
                    advance();
                    if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
                    if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
                    } else {
                        pos_ = save; // 'e' was an identifier start, not an exponent
                    }
                }
                std::string text = src_.substr(start, pos_ - start);
                out.push_back({Tok::Number, text, std::strtod(text.c_str(), nullptr), line, col});
            } else if (c == '"') {
                advance();
                std::string s;
                while (pos_ < src_.size() && src_[pos_] != '"') {
                    if (src_[pos_] == '\n') throw ParseError{"unterminated string literal", line, col};
                    s += src_[pos_];
                    advance();
                }
                if (pos_ >= src_.size()) throw ParseError{"unterminated string literal", line, col};
                advance();
                out.push_back({Tok::String, s, 0.0, line, col});
            } else {
                out.push_back(punct(line, col));
            }
        }
        out.push_back({Tok::End, "", 0.0, line_, col_});
        return out;
    }

private:
    void advance() {
        if (src_[pos_] == '\n') ++line_, col_ = 1;
        else ++col_;
        ++pos_;
    }

    void skipWs() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else {
                break;
            }
        }
    }

    Token punct(int line, int col) {
        auto two = [&](char a, char b) {
            return src_[pos_] == a && pos_ + 1 < src_.size() && src_[pos_ + 1] == b;
        };
        auto make2 = [&](Tok k, const char* t) {
            advance(); advance();
            return Token{k, t, 0.0, line, col};
        };
        auto make1 = [&](Tok k, const char* t) {
            advance();
            return Token{k, t, 0.0, line, col};
        };
        if (two('-', '>')) return make2(Tok::Arrow, "->");
        if (two('-', '-')) return make2(Tok::DDash, "--");
        if (two('.', '.')) return make2(Tok::DotDot, "..");
        if (two('!', '=')) return make2(Tok::Ne, "!=");
        if (two('<', '=')) return make2(Tok::Le, "<=");
        if (two('>', '=')) return make2(Tok::Ge, ">=");
        switch (src_[pos_]) {
            case '[': return make1(Tok::LBracket, "[");
            case ']': return make1(Tok::RBracket, "]");
            case '(': return make1(Tok::LParen, "(");
            case ')': return make1(Tok::RParen, ")");
            case ';': return make1(Tok::Semi, ";");
            case ':': return make1(Tok::Colon, ":");
            case ',': return make1(Tok::Comma, ",");
            case '\'': return make1(Tok::Prime, "'");
            case '+': return make1(Tok::Plus, "+");
            case '-': return make1(Tok::Minus, "-");
            case '*': return make1(Tok::Star, "*");
            case '/': return make1(Tok::Slash, "/");
            case '=': return make1(Tok::Eq, "=");
            case '<': return make1(Tok::Lt, "<");
            case '>': return make1(Tok::Gt, ">");
            case '&': return make1(Tok::Amp, "&");
            case '|': return make1(Tok::Pipe, "|");
            case '!': return make1(Tok::Bang, "!");
        }
        throw ParseError{std::string("unexpected character '") + src_[pos_] + "'", line, col};
    }

    const std::string& src_;
    std::size_t pos_ = 0;
    int line_ = 1, col_ = 1;
};

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    Ast file() {
        expectKeyword("fdctmc", "expected keyword fdctmc at start of model file");
        Ast ast;
        while (peekKeyword("const")) ast.consts.push_back(constDecl());
        while (peekKeyword("module")) ast.modules.push_back(module());
        // labels and rewards blocks may interleave after the modules
        while (true) {
            if (peekKeyword("label")) ast.labels.push_back(labelDecl());
            else if (peekKeyword("rewards")) rewardsBlock(ast.rewardItems);
            else break;
        }
        if (cur().kind != Tok::End)
            fail("unexpected input after model body");
        return ast;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError{msg, cur().line, cur().column};
    }

    const Token& cur() const { return toks_[idx_]; }
    const Token& next() { return toks_[idx_++]; }

    bool peek(Tok k) const { return cur().kind == k; }
    bool peekKeyword(const char* kw) const {
        return cur().kind == Tok::Ident && cur().text == kw;
    }

    Token expect(Tok k, const std::string& what) {
        if (!peek(k)) fail("expected " + what);
        return next();
    }

    void expectKeyword(const char* kw, const std::string& msg) {
        if (!peekKeyword(kw)) fail(msg);
        next();
    }

    bool acceptKeyword(const char* kw) {
        if (peekKeyword(kw)) { next(); return true; }
        return false;
    }

    std::string identifier(const char* what) {
        if (!peek(Tok::Ident)) fail(std::string("expected ") + what);
        return next().text;
    }

    ConstDecl constDecl() {
        int line = cur().line;
        expectKeyword("const", "const");
        acceptKeyword("int") || acceptKeyword("double");
        ConstDecl d;
        d.line = line;
        d.name = identifier("constant name");
        expect(Tok::Eq, "'='");
        d.value = numExpr();
        expect(Tok::Semi, "';'");
        return d;
    }

    Module module() {
        expectKeyword("module", "module");
        Module m;
        m.name = identifier("module name");
        while (peekKeyword("fdelay")) {
            FdelayDecl f;
            f.line = cur().line;
            next();
            f.name = identifier("fd event name");
            expect(Tok::Eq, "'='");
            f.value = numExpr();
            expect(Tok::Semi, "';'");
            m.fdelays.push_back(std::move(f));
        }
        while (peek(Tok::Ident) && !peekKeyword("endmodule"))
            m.vars.push_back(varDecl());
        while (peek(Tok::LBracket))
            m.commands.push_back(command());
        expectKeyword("endmodule", "expected endmodule");
        return m;
    }

    VarDecl varDecl() {
        VarDecl v;
        v.line = cur().line;
        v.name = identifier("variable name");
        expect(Tok::Colon, "':'");
        expect(Tok::LBracket, "'['");
        v.lo = numExpr();
        expect(Tok::DotDot, "'..'");
        v.hi = numExpr();
        expect(Tok::RBracket, "']'");
        expectKeyword("init", "expected init");
        v.init = numExpr();
        expect(Tok::Semi, "';'");
        return v;
    }

    Command command() {
        Command c;
        c.line = cur().line;
        expect(Tok::LBracket, "'['");
        if (peek(Tok::Ident)) c.syncLabel = next().text;
        expect(Tok::RBracket, "']'");
        c.guard = orExpr();
        if (peek(Tok::Arrow)) {
            next();
        } else if (peek(Tok::DDash)) {
            next();
            c.fdEvent = identifier("fd event name in arrow");
            expect(Tok::Arrow, "'->'");
        } else {
            fail("expected '->' or '--event->'");
        }
        c.updates.push_back(update());
        while (peek(Tok::Plus)) {
            next();
            c.updates.push_back(update());
        }
        expect(Tok::Semi, "';'");
        return c;
    }

    Update update() {
        Update u;
        // weight ':' prefix is optional; detect by scanning for ':' before '('
        if (!peek(Tok::LParen) && !peekKeyword("true")) {
            u.weight = numExpr();
            expect(Tok::Colon, "':' after update weight");
        }
        if (acceptKeyword("true")) return u; // identity update
        // assignments: (x'=e) & (y'=e)  or  (x'=e & y'=e)
        expect(Tok::LParen, "'('");
        parseAssigns(u);
        expect(Tok::RParen, "')'");
        while (peek(Tok::Amp)) {
            next();
            expect(Tok::LParen, "'('");
            parseAssigns(u);
            expect(Tok::RParen, "')'");
        }
        return u;
    }

    void parseAssigns(Update& u) {
        while (true) {
            std::string name = identifier("variable name in update");
            expect(Tok::Prime, "' (prime)");
            expect(Tok::Eq, "'='");
            u.assigns.emplace_back(name, numExpr());
            if (peek(Tok::Amp) && toks_[idx_ + 1].kind == Tok::Ident &&
                toks_[idx_ + 2].kind == Tok::Prime) {
                next(); // '&' joining assignments inside one paren group
                continue;
            }
            break;
        }
    }

    LabelDecl labelDecl() {
        LabelDecl l;
        l.line = cur().line;
        expectKeyword("label", "label");
        l.name = expect(Tok::String, "label name string").text;
        expect(Tok::Eq, "'='");
        l.guard = orExpr();
        expect(Tok::Semi, "';'");
        return l;
    }

    void rewardsBlock(std::vector<RewardItem>& items) {
        expectKeyword("rewards", "rewards");
        if (peek(Tok::String)) next(); // optional structure name, ignored
        while (!peekKeyword("endrewards")) {
            RewardItem it;
            it.line = cur().line;
            if (peek(Tok::LBracket)) {
                next();
                if (peek(Tok::Ident)) it.syncLabel = next().text;
                else it.syncLabel = std::string(); // [] = unlabelled commands
                expect(Tok::RBracket, "']'");
            }
            it.guard = orExpr();
            expect(Tok::Colon, "':'");
            it.value = numExpr();
            expect(Tok::Semi, "';'");
            items.push_back(std::move(it));
        }
        next(); // endrewards
    }

    // expression grammar -----------------------------------------------

    ExprPtr mk(Expr::Kind k, ExprPtr l = nullptr, ExprPtr r = nullptr) {
        auto e = std::make_unique<Expr>();
        e->kind = k;
        e->lhs = std::move(l);
        e->rhs = std::move(r);
        e->line = cur().line;
        e->column = cur().column;
        return e;
    }

    ExprPtr orExpr() {
        auto e = andExpr();
        while (peek(Tok::Pipe)) {
            next();
            e = mk(Expr::Kind::Or, std::move(e), andExpr());
        }
        return e;
    }

    ExprPtr andExpr() {
        auto e = notExpr();
        while (peek(Tok::Amp)) {
            next();
            e = mk(Expr::Kind::And, std::move(e), notExpr());
        }
        return e;
    }

    ExprPtr notExpr() {
        if (peek(Tok::Bang)) {
            next();
            return mk(Expr::Kind::Not, notExpr());
        }
        return comparison();
    }

    ExprPtr comparison() {
        auto e = numExpr();
        Expr::Kind k;
        switch (cur().kind) {
            case Tok::Eq: k = Expr::Kind::Eq; break;
            case Tok::Ne: k = Expr::Kind::Ne; break;
            case Tok::Lt: k = Expr::Kind::Lt; break;
            case Tok::Le: k = Expr::Kind::Le; break;
            case Tok::Gt: k = Expr::Kind::Gt; break;
            case Tok::Ge: k = Expr::Kind::Ge; break;
            default: return e;
        }
        next();
        return mk(k, std::move(e), numExpr());
    }

    ExprPtr numExpr() {
        auto e = term();
        while (peek(Tok::Plus) || peek(Tok::Minus)) {
            bool add = next().kind == Tok::Plus;
            e = mk(add ? Expr::Kind::Add : Expr::Kind::Sub, std::move(e), term());
        }
        return e;
    }

    ExprPtr term() {
        auto e = factor();
        while (peek(Tok::Star) || peek(Tok::Slash)) {
            bool mul = next().kind == Tok::Star;
            e = mk(mul ? Expr::Kind::Mul : Expr::Kind::Div, std::move(e), factor());
        }
        return e;
    }

    ExprPtr factor() {
        if (peek(Tok::Minus)) {
            next();
            return mk(Expr::Kind::Neg, factor());
        }
        if (peek(Tok::Number)) {
            auto e = mk(Expr::Kind::Number);
            e->number = next().number;
            return e;
        }
        if (peekKeyword("true") || peekKeyword("false")) {
            auto e = mk(Expr::Kind::BoolLit);
            e->boolValue = next().text == "true";
            return e;
        }
        if (peek(Tok::Ident)) {
            auto e = mk(Expr::Kind::Ident);
            e->ident = next().text;
            return e;
        }
        if (peek(Tok::LParen)) {
            next();
            auto e = orExpr();
            expect(Tok::RParen, "')'");
            return e;
        }
        fail("expected expression");
    }

    std::vector<Token> toks_;
    std::size_t idx_ = 0;
};

} // namespace

ParseResult parse(const std::string& source) {
    ParseResult res;
    try {
        Lexer lex(source);
        Parser p(lex.run());
        res.ast = p.file();
    } catch (const ParseError& e) {
        res.diagnostics.push_back({Severity::Error, e.message, e.line, e.column});
    }
    return res;
}

ElaborateResult loadModel(const std::string& source) {
    auto pr = parse(source);
    if (!pr.ok()) {
        ElaborateResult er;
        er.diagnostics = std::move(pr.diagnostics);
        return er;
    }
    auto er = elaborate(*pr.ast);
    er.diagnostics.insert(er.diagnostics.begin(), pr.diagnostics.begin(), pr.diagnostics.end());
    return er;
}

} // namespace fdctmc::lang
