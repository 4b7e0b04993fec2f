#!/usr/bin/env python3
"""Drives tools/hf_encoder_server.py through the uvakit CLI with a tiny
randomly initialised BERT built offline. Exits 77 (skipped) without torch
or transformers.

usage: hf_server_test.py <uvakit executable> <source dir>
"""
import json
import os
import shutil
import subprocess
import sys
import tempfile

SKIP = 77


def main():
    exe, src = os.path.abspath(sys.argv[1]), os.path.abspath(sys.argv[2])
    try:
        import torch  # noqa: F401
        from transformers import BertConfig, BertForPreTraining, BertTokenizer
    except Exception as e:
        print("skipping: %s" % e)
        return SKIP

    work = tempfile.mkdtemp(prefix="uvakit_hf_")
    try:
        model_dir = os.path.join(work, "tiny-bert")
        os.makedirs(model_dir)
        shutil.copy(os.path.join(src, "tests/fixtures/wordpiece_vocab.txt"), os.path.join(model_dir, "vocab.txt"))
        tok = BertTokenizer(os.path.join(model_dir, "vocab.txt"))
        tok.save_pretrained(model_dir)
        cfg = BertConfig(vocab_size=tok.vocab_size, hidden_size=8, num_hidden_layers=4, num_attention_heads=2,
                         intermediate_size=16, max_position_embeddings=64)
        import torch as t
        t.manual_seed(0)
        BertForPreTraining(cfg).save_pretrained(model_dir)

        server = "process:%s %s --model %s --max-length 64" % (
            sys.executable, os.path.join(src, "tools/hf_encoder_server.py"), model_dir)
        with open(os.path.join(work, "registry.json"), "w") as f:
            json.dump({"models": {"tiny": server}}, f)
        atoms = "\n".join([
            "A1|Headache|S1|C1", "A2|Cranial pain|S2|C1", "A3|Cephalodynia|S3|C1",
            "A4|Renal disorder|S1|C2", "A5|Kidney disorder|S2|C2", "A6|Nephropathy|S3|C2",
            "A7|Acute heart disorder|S1|C3", "A8|Heart disorder acute|S2|C3",
            "A9|Left lung|S1|C4", "A10|Lung left|S2|C4", ""])
        with open(os.path.join(work, "atoms.txt"), "w") as f:
            f.write(atoms)
        config = {
            "atom_file": "atoms.txt", "encoder_registry": "registry.json", "encoder_model": "tiny",
            "embedding.source": "contextual", "extract.layer_pool": "avg_last4",
            "siamese.tokenizer": "wordpiece:" + os.path.join(model_dir, "vocab.txt"),
            "siamese.lstm_hidden": 4, "siamese.dense1_units": 8, "siamese.dense2_units": 4,
            "siamese.batch_size": 16, "siamese.epochs": 2, "cross.models": ["tiny"], "cross.max_len": 32,
        }
        with open(os.path.join(work, "config.json"), "w") as f:
            json.dump(config, f)
        run = os.path.join(work, "run")
        proc = subprocess.run([exe, "run", "-c", os.path.join(work, "config.json"), "-o", run],
                              capture_output=True, text=True)
        if proc.returncode != 0:
            print(proc.stdout, proc.stderr)
            return 1
        report = json.load(open(os.path.join(run, "extract_report.json")))
        assert report["dim"] == 8, report
        assert report["token_coverage"] == 1.0, report
        rows = json.load(open(os.path.join(run, "cross_metrics.json")))["rows"]
        assert [r["configuration"] for r in rows] == ["order (i,j), head nsp", "order (j,i), head nsp"], rows
        for name in ("cross_scores_tiny_ij.tsv", "cross_scores_tiny_ji.tsv"):
            lines = open(os.path.join(run, name)).read().splitlines()
            assert len(lines) > 1
            for line in lines[1:]:
                score = float(line.split("\t")[3])
                assert 0.0 <= score <= 1.0, line
        print("hf encoder server OK")
        return 0
    finally:
        shutil.rmtree(work, ignore_errors=True)


if __name__ == "__main__":
    sys.exit(main())
