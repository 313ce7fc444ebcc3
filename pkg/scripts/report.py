"""
结果落盘与终端汇总 — mu2lab

所有 CSV 以两行注释开头:
    # mu2lab <版本>
    # config: <回显 JSON>
JSON 文档内嵌 version 与 config 两个键。写入经由同一把锁串行化。
"""

from __future__ import annotations

import json
import logging
import math
import threading
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .config import VERSION, RunConfig

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.12g'


def jsonable(obj: Any) -> Any:
    """numpy 标量/数组、NaN/inf → JSON 兼容值 (NaN 与 inf 写为 null)"""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, pd.DataFrame):
        return jsonable(obj.to_dict(orient='records'))
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


class ResultWriter:
    """
    输出目录写入器。

    使用示例:
        writer = ResultWriter('results/sphere3', config)
        writer.write_csv('trace.csv', df)
        writer.write_json('nodal.json', report.to_dict())
    """

    def __init__(self, out_dir: str | Path, config: RunConfig):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.echo = config.echo()
        self.written: list[Path] = []
        self._lock = threading.Lock()

    def header(self) -> str:
        return f"# mu2lab {VERSION}\n# config: {self.echo}\n"

    def write_csv(self, name: str, df: pd.DataFrame) -> Path:
        path = self.out_dir / name
        body = df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        with self._lock:
            with open(path, 'w', encoding='utf-8', newline='') as f:
                f.write(self.header())
                f.write(body)
            self.written.append(path)
        logger.info("写入 %s (%d 行)", path, len(df))
        return path

    def write_json(self, name: str, payload: dict) -> Path:
        path = self.out_dir / name
        doc = {'version': VERSION, 'config': json.loads(self.echo), **jsonable(payload)}
        with self._lock:
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(doc, f, ensure_ascii=False, indent=2, sort_keys=True)
                f.write('\n')
            self.written.append(path)
        logger.info("写入 %s", path)
        return path


def read_result_csv(path: str | Path) -> pd.DataFrame:
    """读取带注释头的结果 CSV"""
    return pd.read_csv(path, comment='#')


def print_table(df: pd.DataFrame, title: str = '', max_rows: int = 40):
    """终端表格"""
    if title:
        print(f"\n[{title}]")
    if df.empty:
        print("  (空)")
        return
    print(df.to_string(index=False, max_rows=max_rows, float_format=lambda x: f'{x:.8g}'))
