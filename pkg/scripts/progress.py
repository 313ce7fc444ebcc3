"""
终端进度显示 — mu2lab

- track(): tqdm 包装的扫描迭代器 (ε 网格、多起点、采样套件)
- stage(): 阶段计时器，打印 ● / ✗ 与耗时
- print_banner(): 子命令横幅

使用示例:
    >>> from scripts.progress import stage, track
    >>> with stage('组装刚度矩阵'):
    ...     A = assemble_stiffness(geom, mesh)
    >>> for eps in track(grid, desc='ε sweep'):
    ...     ...
"""

from __future__ import annotations

import sys
import time
from contextlib import contextmanager
from typing import Iterable, Iterator, TypeVar

from tqdm.auto import tqdm

T = TypeVar('T')

COLORS = {
    'reset': '\033[0m',
    'bold': '\033[1m',
    'dim': '\033[2m',
    'green': '\033[92m',
    'yellow': '\033[93m',
    'red': '\033[91m',
    'cyan': '\033[96m',
}


def _c(name: str) -> str:
    return COLORS[name] if sys.stdout.isatty() else ''


def track(items: Iterable[T], desc: str = '', disable: bool = False, total: int | None = None) -> Iterator[T]:
    """tqdm 进度条；disable=True 时原样迭代"""
    return iter(tqdm(items, desc=desc, disable=disable, total=total, leave=False, dynamic_ncols=True))


@contextmanager
def stage(name: str, quiet: bool = False) -> Iterator[None]:
    """
    阶段计时器。

    使用示例:
        with stage('多起点优化'):
            ...
    """
    start = time.time()
    if not quiet:
        print(f"  {_c('yellow')}◐{_c('reset')} {name}...", end='', flush=True)
    try:
        yield
    except Exception as e:
        if not quiet:
            elapsed = time.time() - start
            print(f"\r  {_c('red')}✗{_c('reset')} {name:<40} {_c('dim')}({elapsed:.1f}s){_c('reset')}")
            print(f"    {_c('red')}错误: {e}{_c('reset')}")
        raise
    if not quiet:
        elapsed = time.time() - start
        print(f"\r  {_c('green')}●{_c('reset')} {name:<40} {_c('dim')}({elapsed:.1f}s){_c('reset')}")


def print_banner(text: str):
    """子命令横幅"""
    print(f"\n{_c('bold')}{_c('cyan')}═══ {text} ═══{_c('reset')}\n")
