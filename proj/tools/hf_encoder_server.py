#!/usr/bin/env python3
"""JSON-lines encoder process backed by a Hugging Face BERT checkpoint.

Register it with a locator such as
    process:python3 tools/hf_encoder_server.py --model dmis-lab/biobert-base-cased-v1.1

Requests arrive one JSON object per line on stdin, replies go to stdout:
    {"op": "info"}                      -> name, num_layers, hidden_dim, tokenizer, head
    {"op": "tokenize", "text": s}       -> {"tokens": [...]}
    {"op": "encode", "tokens": [...]}   -> {"hidden": [layer][position][dim]}
    {"op": "classify", "tokens": [...], "segments": [...]} -> {"probability": p}

encode wraps the tokens in [CLS] ... [SEP] for the model and returns the
states of the original positions only, one entry per transformer layer
(the embedding output is dropped). classify gets an already formatted pair
and returns the next-sentence head's probability that the second segment
follows the first.
"""
import argparse
import json
import sys


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", required=True, help="model name or local directory")
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--max-length", type=int, default=512)
    args = ap.parse_args()

    import torch
    from transformers import AutoTokenizer, BertForPreTraining
    from transformers.utils import logging as hf_logging

    hf_logging.set_verbosity_error()
    tokenizer = AutoTokenizer.from_pretrained(args.model)
    model, loading = BertForPreTraining.from_pretrained(args.model, output_loading_info=True)
    model.to(args.device).eval()
    if any("cls.seq_relationship" in k for k in loading.get("missing_keys", [])):
        print("warning: %s has no trained next-sentence head; classify scores are not meaningful" % args.model,
              file=sys.stderr)

    cfg = model.config
    torch.set_grad_enabled(False)

    def forward(ids, segments):
        ids_t = torch.tensor([ids], device=args.device)
        seg_t = torch.tensor([segments], device=args.device)
        return model(input_ids=ids_t, token_type_ids=seg_t, attention_mask=torch.ones_like(ids_t),
                     output_hidden_states=True)

    def handle(req):
        op = req.get("op")
        if op == "info":
            return {"name": args.model, "num_layers": cfg.num_hidden_layers, "hidden_dim": cfg.hidden_size,
                    "tokenizer": "hf:" + args.model, "head": "nsp"}
        if op == "tokenize":
            return {"tokens": tokenizer.tokenize(req["text"])}
        if op == "encode":
            tokens = req["tokens"][: args.max_length - 2]
            if len(tokens) != len(req["tokens"]):
                return {"error": "sequence longer than %d tokens" % (args.max_length - 2)}
            ids = tokenizer.convert_tokens_to_ids([tokenizer.cls_token] + tokens + [tokenizer.sep_token])
            out = forward(ids, [0] * len(ids))
            hidden = [layer[0, 1:1 + len(tokens)].tolist() for layer in out.hidden_states[1:]]
            return {"hidden": hidden}
        if op == "classify":
            tokens, segments = req["tokens"], req["segments"]
            if len(tokens) != len(segments) or len(tokens) > args.max_length:
                return {"error": "bad classify request"}
            out = forward(tokenizer.convert_tokens_to_ids(tokens), segments)
            # Index 0 of the next-sentence logits means "B follows A".
            p = torch.softmax(out.seq_relationship_logits[0], dim=-1)[0].item()
            return {"probability": p}
        return {"error": "unknown op %r" % op}

    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            reply = handle(json.loads(line))
        except Exception as e:  # report and keep serving
            reply = {"error": "%s: %s" % (type(e).__name__, e)}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
