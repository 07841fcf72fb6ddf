"""只追加的 JSON-lines 结果库。

每条测量一行 ObservableRecord；同一网格点的所有记录共享 key，
key 是 (任务, 模型, N, L, 耦合, 边界, 静态电荷, m, seed) 的内容哈希。
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Iterable
from pathlib import Path

from pydantic import ValidationError

from models import ObservableRecord, RunMeta

logger = logging.getLogger(__name__)

RECORDS_FILE = "records.jsonl"


def run_key(meta: RunMeta, task: str) -> str:
    """网格点的内容哈希。ε_trunc 是计算结果而非输入，不参与哈希。"""
    payload = meta.model_dump(mode="json", exclude={"eps_trunc"})
    payload["task"] = task
    text = json.dumps(payload, sort_keys=True, ensure_ascii=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class ResultStore:
    """records.jsonl 的读写封装。写入只由一个协程/线程完成。"""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.path = self.root / RECORDS_FILE

    def append(self, records: Iterable[ObservableRecord]) -> int:
        self.root.mkdir(parents=True, exist_ok=True)
        n = 0
        with open(self.path, "a", encoding="utf-8") as f:
            for rec in records:
                f.write(rec.model_dump_json() + "\n")
                n += 1
            f.flush()
        return n

    def load(self) -> list[ObservableRecord]:
        """读取全部记录。中断写入留下的残缺末行会被忽略。"""
        if not self.path.exists():
            return []
        out: list[ObservableRecord] = []
        lines = self.path.read_text(encoding="utf-8").splitlines()
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                out.append(ObservableRecord.model_validate_json(line))
            except ValidationError:
                if i == len(lines) - 1:
                    logger.warning("忽略 %s 中残缺的末行", self.path)
                    continue
                raise
        return out

    def completed_keys(self) -> set[str]:
        """最近一次写入全部成功的网格点。

        每个点的记录按 ok 在前、failed 在后写入，因此只看该 key 的最后一条。
        """
        last: dict[str, str] = {}
        for rec in self.load():
            last[rec.key] = rec.status
        return {k for k, s in last.items() if s == "ok"}

    def query(self, name: str | None = None, task: str | None = None) -> list[ObservableRecord]:
        """按观测量名与任务筛选成功记录；name 以 '*' 结尾时按前缀匹配。"""

        def match(rec: ObservableRecord) -> bool:
            if rec.status != "ok":
                return False
            if task is not None and rec.task != task:
                return False
            if name is None:
                return True
            if name.endswith("*"):
                return rec.name.startswith(name[:-1])
            return rec.name == name

        return [r for r in self.load() if match(r)]

    def failures(self) -> list[ObservableRecord]:
        return [r for r in self.load() if r.status == "failed"]
