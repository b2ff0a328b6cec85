//! Hand-labeled code+doctest fixtures covering the four-way error taxonomy,
//! ten per outcome. Fixtures with grader output exercise both classifiers;
//! their texts follow the documented grader-output signatures.

use trajeval_core::corpus::{Doctest, ProblemSpec};
use trajeval_core::functional::ErrorType;

pub struct TaxonomyFixture {
    pub name: &'static str,
    pub code: &'static str,
    pub doctests: &'static [(&'static str, &'static str)],
    pub label: ErrorType,
    /// Recorded grader output, when the fixture is a dual fixture.
    pub grader_output: Option<&'static str>,
    /// Needs a short per-test timeout (infinite loop).
    pub slow: bool,
}

impl TaxonomyFixture {
    pub fn problem(&self) -> ProblemSpec {
        ProblemSpec {
            problem_id: self.name.to_string(),
            statement: format!("taxonomy fixture {}", self.name),
            skeleton_code: String::new(),
            doctests: self
                .doctests
                .iter()
                .map(|(input, expected)| Doctest {
                    input: (*input).to_string(),
                    expected: (*expected).to_string(),
                })
                .collect(),
        }
    }
}

const PASSED: &str = "All tests passed";
const DIFF: &str = "Test 1 failed:\n# Error: expected\n#     4\n# but got\n#     5";

pub fn fixtures() -> Vec<TaxonomyFixture> {
    vec![
        // ---- no_error ----
        TaxonomyFixture {
            name: "ok_identity",
            code: "def f(x):\n    return x\n",
            doctests: &[("f(3)", "3"), ("f(0)", "0")],
            label: ErrorType::NoError,
            grader_output: Some(PASSED),
            slow: false,
        },
        TaxonomyFixture {
            name: "ok_add",
            code: "def f(a, b):\n    return a + b\n",
            doctests: &[("f(2, 3)", "5"), ("f(-1, 1)", "0")],
            label: ErrorType::NoError,
            grader_output: Some(PASSED),
            slow: false,
        },
        TaxonomyFixture {
            name: "ok_max",
            code: "def f(a, b):\n    if a > b:\n        return a\n    return b\n",
            doctests: &[("f(2, 9)", "9"), ("f(4, 1)", "4")],
            label: ErrorType::NoError,
            grader_output: Some(PASSED),
            slow: false,
        },
        TaxonomyFixture {
            name: "ok_abs",
            code: "def f(x):\n    if x < 0:\n        return -x\n    return x\n",
            doctests: &[("f(-5)", "5"), ("f(5)", "5")],
            label: ErrorType::NoError,
            grader_output: Some(PASSED),
            slow: false,
        },
        TaxonomyFixture {
            name: "ok_print",
            code: "def f():\n    print('hi')\n",
            doctests: &[("f()", "hi")],
            label: ErrorType::NoError,
            grader_output: Some(PASSED),
            slow: false,
        },
        TaxonomyFixture {
            name: "ok_repeat",
            code: "def f(s, n):\n    return s * n\n",
            doctests: &[("f('ab', 2)", "'abab'")],
            label: ErrorType::NoError,
            grader_output: Some(PASSED),
            slow: false,
        },
        TaxonomyFixture {
            name: "ok_sum_loop",
            code: "def f(lst):\n    total = 0\n    for x in lst:\n        total += x\n    return total\n",
            doctests: &[("f([1, 2, 3])", "6"), ("f([])", "0")],
            label: ErrorType::NoError,
            grader_output: Some(PASSED),
            slow: false,
        },
        TaxonomyFixture {
            name: "ok_factorial",
            code: "def f(n):\n    if n <= 1:\n        return 1\n    return n * f(n - 1)\n",
            doctests: &[("f(4)", "24"), ("f(1)", "1")],
            label: ErrorType::NoError,
            grader_output: Some(PASSED),
            slow: false,
        },
        TaxonomyFixture {
            name: "ok_is_even",
            code: "def f(n):\n    return n % 2 == 0\n",
            doctests: &[("f(4)", "True"), ("f(3)", "False")],
            label: ErrorType::NoError,
            grader_output: Some(PASSED),
            slow: false,
        },
        TaxonomyFixture {
            name: "ok_reverse",
            code: "def f(s):\n    return s[::-1]\n",
            doctests: &[("f('abc')", "'cba'")],
            label: ErrorType::NoError,
            grader_output: Some(PASSED),
            slow: false,
        },
        // ---- logical ----
        TaxonomyFixture {
            name: "bug_off_by_one",
            code: "def f(a, b):\n    return a + b + 1\n",
            doctests: &[("f(2, 3)", "5")],
            label: ErrorType::Logical,
            grader_output: Some(DIFF),
            slow: false,
        },
        TaxonomyFixture {
            name: "bug_min_not_max",
            code: "def f(a, b):\n    if a < b:\n        return a\n    return b\n",
            doctests: &[("f(2, 9)", "9")],
            label: ErrorType::Logical,
            grader_output: Some(DIFF),
            slow: false,
        },
        TaxonomyFixture {
            name: "bug_identity_not_square",
            code: "def f(x):\n    return x\n",
            doctests: &[("f(3)", "9"), ("f(1)", "1")],
            label: ErrorType::Logical,
            grader_output: Some(DIFF),
            slow: false,
        },
        TaxonomyFixture {
            name: "bug_last_not_sum",
            code: "def f(lst):\n    total = 0\n    for x in lst:\n        total = x\n    return total\n",
            doctests: &[("f([1, 2, 3])", "6"), ("f([5])", "5")],
            label: ErrorType::Logical,
            grader_output: Some(DIFF),
            slow: false,
        },
        TaxonomyFixture {
            name: "bug_abs_no_negate",
            code: "def f(x):\n    return x\n",
            doctests: &[("f(-5)", "5")],
            label: ErrorType::Logical,
            grader_output: Some(DIFF),
            slow: false,
        },
        TaxonomyFixture {
            name: "bug_factorial_one",
            code: "def f(n):\n    return 1 if n <= 1 else f(n - 1)\n",
            doctests: &[("f(4)", "24")],
            label: ErrorType::Logical,
            grader_output: Some(DIFF),
            slow: false,
        },
        TaxonomyFixture {
            name: "bug_odd_not_even",
            code: "def f(n):\n    return n % 2 == 1\n",
            doctests: &[("f(4)", "True")],
            label: ErrorType::Logical,
            grader_output: Some(DIFF),
            slow: false,
        },
        TaxonomyFixture {
            name: "bug_count_plus_one",
            code: "def f(s):\n    return len(s) + 1\n",
            doctests: &[("f('abc')", "3")],
            label: ErrorType::Logical,
            grader_output: Some(DIFF),
            slow: false,
        },
        TaxonomyFixture {
            name: "bug_repeat_once",
            code: "def f(s, n):\n    return s\n",
            doctests: &[("f('ab', 2)", "'abab'")],
            label: ErrorType::Logical,
            grader_output: Some(DIFF),
            slow: false,
        },
        TaxonomyFixture {
            name: "bug_floor_not_true_div",
            code: "def f(a, b):\n    return a // b\n",
            doctests: &[("f(7, 2)", "3.5")],
            label: ErrorType::Logical,
            grader_output: Some(DIFF),
            slow: false,
        },
        // ---- runtime ----
        TaxonomyFixture {
            name: "err_zero_division",
            code: "def f(x):\n    return x / 0\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Runtime,
            grader_output: Some(
                "Traceback (most recent call last):\n  File \"sub.py\", line 2, in f\nZeroDivisionError: division by zero",
            ),
            slow: false,
        },
        TaxonomyFixture {
            name: "err_name",
            code: "def f(x):\n    return undefined_var\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Runtime,
            grader_output: Some(
                "Traceback (most recent call last):\n  File \"sub.py\", line 2, in f\nNameError: name 'undefined_var' is not defined",
            ),
            slow: false,
        },
        TaxonomyFixture {
            name: "err_type",
            code: "def f(x):\n    return x + '1'\n",
            doctests: &[("f(2)", "3")],
            label: ErrorType::Runtime,
            grader_output: Some(
                "Traceback (most recent call last):\n  File \"sub.py\", line 2, in f\nTypeError: unsupported operand type(s)",
            ),
            slow: false,
        },
        TaxonomyFixture {
            name: "err_index",
            code: "def f(lst):\n    return lst[10]\n",
            doctests: &[("f([1])", "1")],
            label: ErrorType::Runtime,
            grader_output: Some(
                "Traceback (most recent call last):\n  File \"sub.py\", line 2, in f\nIndexError: list index out of range",
            ),
            slow: false,
        },
        TaxonomyFixture {
            name: "err_key",
            code: "def f(x):\n    return {}['missing']\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Runtime,
            grader_output: Some(
                "Traceback (most recent call last):\n  File \"sub.py\", line 2, in f\nKeyError: 'missing'",
            ),
            slow: false,
        },
        TaxonomyFixture {
            name: "err_attribute",
            code: "def f(x):\n    return x.append(1)\n",
            doctests: &[("f(5)", "1")],
            label: ErrorType::Runtime,
            grader_output: Some(
                "Traceback (most recent call last):\n  File \"sub.py\", line 2, in f\nAttributeError: 'int' object has no attribute 'append'",
            ),
            slow: false,
        },
        TaxonomyFixture {
            name: "err_recursion",
            code: "def f(x):\n    return f(x)\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Runtime,
            grader_output: Some(
                "Traceback (most recent call last):\n  File \"sub.py\", line 2, in f\nRecursionError: maximum recursion depth exceeded",
            ),
            slow: false,
        },
        TaxonomyFixture {
            name: "err_value",
            code: "def f(s):\n    return int('abc')\n",
            doctests: &[("f('1')", "1")],
            label: ErrorType::Runtime,
            grader_output: Some(
                "Traceback (most recent call last):\n  File \"sub.py\", line 2, in f\nValueError: invalid literal for int()",
            ),
            slow: false,
        },
        TaxonomyFixture {
            name: "err_unbound_local",
            code: "def f(x):\n    if x > 100:\n        y = 1\n    return y\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Runtime,
            grader_output: Some(
                "Traceback (most recent call last):\n  File \"sub.py\", line 4, in f\nUnboundLocalError: local variable 'y' referenced before assignment",
            ),
            slow: false,
        },
        TaxonomyFixture {
            name: "err_infinite_loop",
            code: "def f(x):\n    while True:\n        x += 1\n    return x\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Runtime,
            grader_output: Some("TimeoutError: per-test time limit exceeded"),
            slow: true,
        },
        // ---- compile ----
        TaxonomyFixture {
            name: "syn_missing_colon",
            code: "def f(x)\n    return x\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Compile,
            grader_output: Some("SyntaxError: invalid syntax"),
            slow: false,
        },
        TaxonomyFixture {
            name: "syn_unbalanced_paren",
            code: "def f(x):\n    return (x + 1\n",
            doctests: &[("f(1)", "2")],
            label: ErrorType::Compile,
            grader_output: Some("SyntaxError: '(' was never closed"),
            slow: false,
        },
        TaxonomyFixture {
            name: "syn_missing_indent",
            code: "def f(x):\nreturn x\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Compile,
            grader_output: Some("IndentationError: expected an indented block"),
            slow: false,
        },
        TaxonomyFixture {
            name: "syn_bad_token",
            code: "def f(x):\n    return $x\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Compile,
            grader_output: Some("SyntaxError: invalid syntax"),
            slow: false,
        },
        TaxonomyFixture {
            name: "syn_assign_to_literal",
            code: "def f(x):\n    1 = x\n    return x\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Compile,
            grader_output: Some("SyntaxError: cannot assign to literal"),
            slow: false,
        },
        TaxonomyFixture {
            name: "syn_unterminated_string",
            code: "def f(x):\n    return \"abc\n",
            doctests: &[("f(1)", "'abc'")],
            label: ErrorType::Compile,
            grader_output: Some("SyntaxError: unterminated string literal"),
            slow: false,
        },
        TaxonomyFixture {
            name: "syn_keyword_name",
            code: "def def(x):\n    return x\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Compile,
            grader_output: Some("SyntaxError: invalid syntax"),
            slow: false,
        },
        TaxonomyFixture {
            name: "syn_missing_expr",
            code: "def f(x):\n    y =\n    return y\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Compile,
            grader_output: Some("SyntaxError: invalid syntax"),
            slow: false,
        },
        TaxonomyFixture {
            name: "syn_double_return",
            code: "def f(x):\n    return return x\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Compile,
            grader_output: Some("SyntaxError: invalid syntax"),
            slow: false,
        },
        // Definition-time failure: classified before the first doctest runs.
        // Not a dual fixture; recorded grader texts for these are ambiguous.
        TaxonomyFixture {
            name: "syn_definition_time_failure",
            code: "threshold = undefined_limit\ndef f(x):\n    return x\n",
            doctests: &[("f(1)", "1")],
            label: ErrorType::Compile,
            grader_output: None,
            slow: false,
        },
    ]
}
