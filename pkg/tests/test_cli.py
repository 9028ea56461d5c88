from funduseg.cli import main


def write_cfg(tmp_path, **kw):
    base = dict(
        images=10, train_size=32, depth=2, base_filters=4, epochs=1, batch=4,
        seed=2, out=str(tmp_path / "run"),
        disc_radius="8:12", cup_ratio="0.4:0.6", center_jitter=4,
    )
    base.update(kw)
    body = "".join(f"{k} = {v}\n" for k, v in base.items())
    path = tmp_path / "config.txt"
    path.write_text(body)
    return path


def test_synth_writes_pairs_and_manifest(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "ds"
    assert main(["synth", "--config", str(cfg), "--out", str(out), "--images", "3"]) == 0
    assert len(list((out / "images").glob("*.ppm"))) == 3
    assert len(list((out / "masks").glob("*.pgm"))) == 3
    manifest = (out / "manifest.txt").read_text()
    assert manifest.count("pair = ") == 3


def test_full_flow(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["preprocess", "--config", str(cfg)]) == 0
    assert main(["train", "--config", str(cfg)]) == 0
    assert main(["eval", "--config", str(cfg)]) == 0
    assert main(["activations", "--config", str(cfg)]) == 0
    run = tmp_path / "run"
    assert (run / "ckpt_best.bin").exists()
    assert (run / "metrics_test.csv").exists()
    assert list((run / "activations").glob("*.pgm"))
    out = capsys.readouterr().out
    assert "dice_disc" in out


def test_crossval_command(tmp_path):
    cfg = write_cfg(tmp_path, images=10)
    assert main(["crossval", "--config", str(cfg), "--folds", "5"]) == 0
    assert (tmp_path / "run" / "crossval.csv").exists()


def test_compare_command(tmp_path):
    cfg = write_cfg(tmp_path, images=10)
    assert main(["compare", "--config", str(cfg)]) == 0
    assert (tmp_path / "run" / "compare.csv").exists()


def test_mode_override(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["preprocess", "--config", str(cfg), "--mode", "regions"]) == 0
    roles = (tmp_path / "run" / "data" / "targets" / "img0000.roles.txt").read_text().split()
    assert roles == ["background", "disc_region", "cup_region"]


def test_missing_config_is_config_error(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.txt")]) == 1
    assert "configuration error" in capsys.readouterr().err


def test_unknown_key_is_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("who = knows\n")
    assert main(["train", "--config", str(bad)]) == 1


def test_bad_usage_is_config_error(capsys):
    assert main(["no-such-command"]) == 1


def test_runtime_failure_is_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path)  # no preprocess run
    assert main(["train", "--config", str(cfg)]) == 2
    assert "error" in capsys.readouterr().err


def test_eval_before_train_is_exit_2(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["preprocess", "--config", str(cfg)]) == 0
    assert main(["eval", "--config", str(cfg)]) == 2
