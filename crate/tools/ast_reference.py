# Reference derivation of AST shape values from the Python abstract grammar.
# Used once to derive golden fixture values; not part of the toolkit.
import ast
import json
import sys

EXCLUDED = (ast.Load, ast.Store, ast.Del)


def shape(code):
    tree = ast.parse(code)
    levels = {}

    def walk(node, depth):
        levels[depth] = levels.get(depth, 0) + 1
        for child in ast.iter_child_nodes(node):
            if isinstance(child, EXCLUDED):
                continue
            walk(child, depth + 1)

    walk(tree, 1)
    return {
        "nodes": sum(levels.values()),
        "depth": max(levels),
        "width": max(levels.values()),
    }


if __name__ == "__main__":
    snippets = json.load(sys.stdin)
    print(json.dumps([shape(s) for s in snippets], indent=1))
