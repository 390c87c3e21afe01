import numpy as np
import pytest

from secure_lawn import dsl

SCHEMA = dsl.VarSchema(("x", "y", "aav_x", "aav_y", "jam_x", "jam_y"), {"p_a": 2, "p_j": 2, "pos_a": 3, "pos_b": 3})

_SCALAR_FUNCS = [n for n, k in dsl.BUILTINS.items() if dsl.VECTOR not in k]
_VECTOR_FUNCS = [n for n, k in dsl.BUILTINS.items() if dsl.VECTOR in k]


def random_expr(rng: np.random.Generator, schema: dsl.VarSchema = SCHEMA, max_depth: int = 6) -> dsl.Expr:
    """Random well-typed scalar expression within the parser limits."""
    budget = [dsl.MAX_NODES]

    def scalar(depth):
        budget[0] -= 1
        leaf = depth >= max_depth or budget[0] < 8 or rng.random() < 0.3
        if leaf:
            if rng.random() < 0.5:
                return dsl.Num(float(rng.choice([0.0, 1.0, -2.5, 1e-5, 123.456, rng.normal() * 10])))
            return dsl.Var(str(rng.choice(schema.scalars)))
        if rng.random() < 0.2:
            name = str(rng.choice(_VECTOR_FUNCS))
            vec_names = [n for n in schema.vectors]
            first = str(rng.choice(vec_names))
            same_dim = [n for n in vec_names if schema.vectors[n] == schema.vectors[first]]
            args = [dsl.Var(first)]
            if len(dsl.BUILTINS[name]) == 2:
                args.append(dsl.Var(str(rng.choice(same_dim))))
            return dsl.Call(name, tuple(args))
        name = str(rng.choice(_SCALAR_FUNCS))
        return dsl.Call(name, tuple(scalar(depth + 1) for _ in dsl.BUILTINS[name]))

    return scalar(1)


def random_binding(rng: np.random.Generator, schema: dsl.VarSchema = SCHEMA, scale: float = 10.0) -> dict:
    binding = {n: float(rng.normal() * scale) for n in schema.scalars}
    binding.update({n: rng.normal(size=d) * scale for n, d in schema.vectors.items()})
    return binding


@pytest.fixture
def schema():
    return SCHEMA
