"""
反向模式自动微分核心
稠密张量 + 记录带 (Tape)；模型中的所有可微运算都由这里的原语组合而成
"""
import logging
import threading
from contextlib import contextmanager
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ContractError, DimensionError, NumericalAbort

logger = logging.getLogger(__name__)

# 全局精度开关：测试 64 位，训练可切换为 32 位
_DTYPES = {32: np.float32, 64: np.float64}
_precision = {"dtype": np.float64}
_debug = {"enabled": False}

# 每个线程独立的梯度记录开关
_grad_mode = threading.local()

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Operand = Union["Tensor", float, int, np.ndarray]


def set_precision(bits: int):
    """
    设置新建张量的浮点精度

    Args:
        bits: 32 或 64
    """
    if bits not in _DTYPES:
        raise ContractError(f"Unsupported precision: {bits} (expected 32 or 64)")
    _precision["dtype"] = _DTYPES[bits]
    logger.debug(f"Tensor precision set to {bits}-bit")


def get_dtype():
    """当前张量精度对应的 numpy dtype"""
    return _precision["dtype"]


@contextmanager
def precision(bits: int):
    """临时切换精度的上下文管理器"""
    previous = _precision["dtype"]
    set_precision(bits)
    try:
        yield
    finally:
        _precision["dtype"] = previous


def set_debug(enabled: bool):
    """开启后每个原语都检查输出是否全部有限"""
    _debug["enabled"] = bool(enabled)


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad():
    """在该上下文中不记录计算图（评估/推理用）"""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Record:
    """一次原语调用的记录：算子名、输入张量与反向函数"""

    __slots__ = ("op", "inputs", "backward")

    def __init__(self, op: str, inputs: Tuple["Tensor", ...], backward: BackwardFn):
        self.op = op
        self.inputs = inputs
        self.backward = backward


class Tensor:
    """
    参与反向微分的稠密张量
    构造后 data 视为只读，唯一可变的是 grad 累加缓冲
    """

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        """
        Args:
            data: 数组数据（会被复制并转换为当前精度）
            requires_grad: 是否为需要梯度的叶子
            name: 可选名称（参数名）
        """
        self.data = np.array(data, dtype=get_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._record: Optional[Record] = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """不复制地包装原语输出"""
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        out.grad = None
        out.name = None
        out._record = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._record is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        label = f", name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # 运算符重载
    def __add__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: Operand) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __pow__(self, exponent: float) -> "Tensor":
        return power(self, exponent)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis, keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape_view(self, shape)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(value: Operand) -> Tensor:
    """把标量或数组包装为常量张量"""
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.asarray(value, dtype=get_dtype()))


def record(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """
    创建原语输出并（在需要时）记录计算图节点
    供本模块与扩展原语（如 B 样条基）共用

    Args:
        op: 算子名
        data: 前向结果
        inputs: 输入张量
        backward: 反向函数，输入输出梯度，返回每个输入的梯度（可为 None）

    Returns:
        Tensor: 输出张量
    """
    if _debug["enabled"] and not np.all(np.isfinite(data)):
        raise NumericalAbort(f"Non-finite output from primitive '{op}'")
    needs_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires_grad=needs_grad)
    if needs_grad:
        out._record = Record(op, tuple(inputs), backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """将广播后的梯度求和还原到原始形状"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not broadcastable")


# ---------------------------------------------------------------------------
# 逐元素原语
# ---------------------------------------------------------------------------

def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record("add", a.data + b.data, (a, b), backward)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record("sub", a.data - b.data, (a, b), backward)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record("mul", a.data * b.data, (a, b), backward)


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def backward(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return record("div", out, (a, b), backward)


def neg(x: Operand) -> Tensor:
    x = as_tensor(x)
    return record("neg", -x.data, (x,), lambda g: (-g,))


def power(x: Operand, exponent: float) -> Tensor:
    """x ** exponent，指数为常数"""
    x = as_tensor(x)
    exponent = float(exponent)

    def backward(g):
        return (g * exponent * np.power(x.data, exponent - 1.0),)

    return record("pow", np.power(x.data, exponent), (x,), backward)


def exp(x: Operand) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return record("exp", out, (x,), lambda g: (g * out,))


def _sigmoid_np(v: np.ndarray) -> np.ndarray:
    # 分段计算避免 exp 溢出
    z = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(v.dtype, copy=False)


def sigmoid(x: Operand) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid_np(x.data)
    return record("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def silu(x: Operand) -> Tensor:
    """silu(x) = x * sigmoid(x)"""
    x = as_tensor(x)
    s = _sigmoid_np(x.data)

    def backward(g):
        return (g * (s * (1.0 + x.data * (1.0 - s))),)

    return record("silu", x.data * s, (x,), backward)


def relu(x: Operand) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return record("relu", np.where(mask, x.data, 0.0).astype(x.data.dtype), (x,),
                  lambda g: (g * mask,))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "silu": silu,
    "sigmoid": sigmoid,
    "relu": relu,
    "exp": exp,
    "neg": neg,
}


def elementwise(op: str, *inputs: Operand) -> Tensor:
    """
    按名称分派逐元素原语

    Args:
        op: add/sub/mul/div/silu/sigmoid/relu/exp/neg
        inputs: 操作数（一元或二元）

    Returns:
        Tensor: 结果
    """
    if op not in _ELEMENTWISE:
        raise ContractError(f"Unknown elementwise op: {op}")
    return _ELEMENTWISE[op](*inputs)


# ---------------------------------------------------------------------------
# 归约
# ---------------------------------------------------------------------------

def _normalize_axes(axis, ndim: int) -> Optional[Tuple[int, ...]]:
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = []
    for ax in axes:
        if ax < -ndim or ax >= max(ndim, 1):
            raise DimensionError(f"Invalid axis {ax} for tensor with {ndim} dimension(s)")
        normalized.append(ax % ndim if ndim else 0)
    return tuple(sorted(set(normalized)))


def tensor_sum(x: Operand, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    out = np.sum(x.data, axis=axes, keepdims=keepdims)

    def backward(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return record("sum", np.asarray(out, dtype=x.data.dtype), (x,), backward)


def tensor_mean(x: Operand, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    count = x.size if axes is None else int(np.prod([x.shape[a] for a in axes]))
    out = np.mean(x.data, axis=axes, keepdims=keepdims)

    def backward(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return record("mean", np.asarray(out, dtype=x.data.dtype), (x,), backward)


def reduce(op: str, x: Operand, axes=None, keepdims: bool = False) -> Tensor:
    """按名称分派归约 (sum/mean)"""
    if op == "sum":
        return tensor_sum(x, axes, keepdims)
    if op == "mean":
        return tensor_mean(x, axes, keepdims)
    raise ContractError(f"Unknown reduction: {op}")


# ---------------------------------------------------------------------------
# 线性代数与形状变换
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """二维矩阵乘 [m,k] @ [k,n] -> [m,n]"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return record("matmul", a.data @ b.data, (a, b), backward)


def transpose(x: Tensor) -> Tensor:
    """二维转置"""
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got shape {x.shape}")
    return record("transpose", x.data.T.copy(), (x,), lambda g: (g.T,))


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    """任意轴置换"""
    x = as_tensor(x)
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"permute: {axes} is not a permutation of {x.ndim} axes")
    inverse = tuple(np.argsort(axes))
    return record("permute", np.ascontiguousarray(np.transpose(x.data, axes)), (x,),
                  lambda g: (np.transpose(g, inverse),))


def reshape_view(x: Tensor, new_shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    new_shape = tuple(int(s) for s in new_shape)
    if -1 not in new_shape and int(np.prod(new_shape)) != x.size:
        raise DimensionError(f"reshape: cannot view shape {x.shape} as {new_shape}")
    try:
        out = x.data.reshape(new_shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view shape {x.shape} as {new_shape}")
    return record("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise DimensionError("concat needs at least one tensor")
    ndim = xs[0].ndim
    axis = axis % ndim
    for x in xs[1:]:
        if x.ndim != ndim or any(x.shape[i] != xs[0].shape[i] for i in range(ndim) if i != axis):
            raise DimensionError(
                f"concat: shapes {[t.shape for t in xs]} disagree outside axis {axis}")
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return record("concat", np.concatenate([x.data for x in xs], axis=axis), xs, backward)


def nearest_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """
    最近邻缩放 [H,W,C] -> [out_h,out_w,C]
    源索引 floor(i * H / out_h)；反向为分散累加

    Args:
        x: 输入特征图
        out_h: 目标高度
        out_w: 目标宽度

    Returns:
        Tensor: 缩放后的特征图
    """
    x = as_tensor(x)
    if x.ndim != 3 or out_h < 1 or out_w < 1:
        raise DimensionError(f"nearest_resize: bad input shape {x.shape} or size {out_h}x{out_w}")
    h, w = x.shape[0], x.shape[1]
    rows = (np.arange(out_h) * h) // out_h
    cols = (np.arange(out_w) * w) // out_w
    out = x.data[rows[:, None], cols[None, :], :]

    def backward(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, (rows[:, None], cols[None, :]), g)
        return (grad,)

    return record("nearest_resize", out, (x,), backward)


def nearest_upsample(x: Tensor, factor: int) -> Tensor:
    """最近邻整数倍上采样，支持 [H,W] 与 [H,W,C]"""
    x = as_tensor(x)
    if int(factor) != factor or factor < 1:
        raise DimensionError(f"nearest_upsample: factor must be an integer >= 1, got {factor}")
    factor = int(factor)
    if x.ndim == 2:
        return reshape_view(nearest_upsample(reshape_view(x, x.shape + (1,)), factor),
                            (x.shape[0] * factor, x.shape[1] * factor))
    if x.ndim != 3:
        raise DimensionError(f"nearest_upsample expects [H,W] or [H,W,C], got {x.shape}")
    h, w, c = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=0), factor, axis=1)

    def backward(g):
        return (g.reshape(h, factor, w, factor, c).sum(axis=(1, 3)),)

    return record("nearest_upsample", out, (x,), backward)


def pointwise_conv(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """
    1x1 卷积：逐像素的通道线性映射 [H,W,Cin] x [Cin,Cout] + [Cout]

    Args:
        x: 输入特征图
        w: 权重
        b: 偏置（可选）

    Returns:
        Tensor: [H,W,Cout]
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 2 or x.shape[2] != w.shape[0]:
        raise DimensionError(f"pointwise_conv: input {x.shape} incompatible with weight {w.shape}")
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[1],):
            raise DimensionError(f"pointwise_conv: bias {b.shape} does not match weight {w.shape}")
    h, wd, cin = x.shape
    flat = x.data.reshape(h * wd, cin)
    out = flat @ w.data
    if b is not None:
        out = out + b.data
    out = out.reshape(h, wd, w.shape[1])

    def backward(g):
        g2 = g.reshape(h * wd, -1)
        grads = [(g2 @ w.data.T).reshape(x.shape), flat.T @ g2]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return grads

    inputs = (x, w) if b is None else (x, w, b)
    return record("pointwise_conv", out, inputs, backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return record("softmax", out, (x,), backward)


# ---------------------------------------------------------------------------
# 反向传播
# ---------------------------------------------------------------------------

class Tape:
    """
    按拓扑序排列的原语记录
    由输出张量回溯生成：每个节点的输入都排在它之前，反向时每个节点恰好访问一次
    """

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "Tape":
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited or node._record is None:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._record.inputs:
                if parent._record is not None and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def ops(self) -> List[str]:
        return [node._record.op for node in self.nodes]


def backward(loss: Tensor) -> Dict[Tensor, np.ndarray]:
    """
    从标量损失反向传播，梯度累加 (+=) 到所有 requires_grad 叶子的 grad

    Args:
        loss: 标量损失

    Returns:
        dict: 叶子张量 -> 本次传播得到的梯度
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._record is None:
        raise ContractError("backward: loss was not produced by any recorded operation")
    tape = Tape.from_output(loss)
    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaf_grads: Dict[Tensor, np.ndarray] = {}

    for node in reversed(tape.nodes):
        g_out = pending.pop(id(node), None)
        if g_out is None:
            continue
        in_grads = node._record.backward(g_out)
        for parent, grad in zip(node._record.inputs, in_grads):
            if grad is None or not parent.requires_grad:
                continue
            if parent._record is None:
                if parent in leaf_grads:
                    leaf_grads[parent] = leaf_grads[parent] + grad
                else:
                    leaf_grads[parent] = np.array(grad, dtype=parent.data.dtype)
            elif id(parent) in pending:
                pending[id(parent)] = pending[id(parent)] + grad
            else:
                pending[id(parent)] = grad

    for leaf, grad in leaf_grads.items():
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
        leaf.grad += grad
    logger.debug(f"Backward over {len(tape)} recorded ops, {len(leaf_grads)} leaves")
    return leaf_grads


def zero_grads(params: Sequence[Tensor]):
    """清空梯度缓冲（每次训练迭代前调用）"""
    for p in params:
        p.grad = None


def finite_diff_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5,
                      max_coords: Optional[int] = None, seed: int = 0, floor: float = 1e-8) -> float:
    """
    中心差分梯度校验

    Args:
        f: 张量 -> 标量张量，必须确定性
        x: 检查点（数组或张量）
        eps: 差分步长
        max_coords: 只抽查这么多个坐标（None 表示全部）
        seed: 抽样坐标的随机种子
        floor: 相对误差分母下限，梯度量级低于它时按绝对误差计

    Returns:
        float: 最大相对误差，分母 max(|解析|, |数值|, floor)
    """
    if eps <= 0:
        raise ContractError("finite_diff_check: eps must be positive")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=get_dtype())
    probe = Tensor(base, requires_grad=True)
    loss = f(probe)
    backward(loss)
    analytic = probe.grad if probe.grad is not None else np.zeros_like(base)

    coords = np.arange(base.size)
    if max_coords is not None and max_coords < base.size:
        rng = np.random.default_rng(seed)
        coords = np.sort(rng.choice(base.size, size=max_coords, replace=False))

    worst = 0.0
    with no_grad():
        for i in coords:
            plus = base.copy()
            plus.reshape(-1)[i] += eps
            minus = base.copy()
            minus.reshape(-1)[i] -= eps
            numeric = (f(Tensor(plus)).item() - f(Tensor(minus)).item()) / (2.0 * eps)
            a = float(analytic.reshape(-1)[i])
            denom = max(abs(a), abs(numeric), floor)
            worst = max(worst, abs(a - numeric) / denom)
    return worst


def finite_diff_check_param(f: Callable[[], Tensor], param: Tensor, eps: float = 1e-5,
                            max_coords: Optional[int] = None, seed: int = 0, floor: float = 1e-8) -> float:
    """
    对参数张量做中心差分校验
    扰动时替换 param.data 引用（原数组不被修改），结束后恢复

    Args:
        f: 无参闭包，返回标量损失（内部使用 param）
        param: 需要梯度的叶子参数
        eps: 差分步长
        max_coords: 抽查坐标数
        seed: 抽样种子
        floor: 相对误差分母下限

    Returns:
        float: 最大相对误差
    """
    if not param.requires_grad:
        raise ContractError(f"finite_diff_check_param: {param.name} does not require grad")
    original = param.data
    saved_grad = param.grad
    param.grad = None
    try:
        backward(f())
        analytic = param.grad if param.grad is not None else np.zeros_like(original)
        coords = np.arange(original.size)
        if max_coords is not None and max_coords < original.size:
            rng = np.random.default_rng(seed)
            coords = np.sort(rng.choice(original.size, size=max_coords, replace=False))
        worst = 0.0
        with no_grad():
            for i in coords:
                plus = original.copy()
                plus.reshape(-1)[i] += eps
                param.data = plus
                f_plus = f().item()
                minus = original.copy()
                minus.reshape(-1)[i] -= eps
                param.data = minus
                f_minus = f().item()
                param.data = original
                numeric = (f_plus - f_minus) / (2.0 * eps)
                a = float(analytic.reshape(-1)[i])
                worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
        return worst
    finally:
        param.data = original
        param.grad = saved_grad
