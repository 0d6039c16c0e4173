import json

import pytest

from logtally import ledger
from logtally.config import DEFAULTS, Settings
from logtally.errors import InvalidInputError


def write_config(tmp_path, text):
    path = tmp_path / 'proj' / 'configs' / 'logtally.yaml'
    path.parent.mkdir(parents=True)
    path.write_text(text)
    return path


def test_defaults_fill_missing_keys(tmp_path):
    s = Settings(write_config(tmp_path, 'pipeline:\n  min_area: 60\n'))
    pipe = s.section('pipeline')
    assert pipe['min_area'] == 60
    assert pipe['binarize'] == DEFAULTS['pipeline']['binarize']
    assert s.port == 8080


def test_section_is_a_copy(tmp_path):
    s = Settings(write_config(tmp_path, ''))
    s.section('pipeline')['min_area'] = 999
    assert s.section('pipeline')['min_area'] == 0


def test_env_overrides(tmp_path, monkeypatch):
    path = write_config(tmp_path, 'service:\n  port: 9000\n')
    monkeypatch.setenv('LOGTALLY_CONFIG', str(path))
    monkeypatch.setenv('LOGTALLY_PORT', '9100')
    monkeypatch.setenv('LOGTALLY_LEDGER', str(tmp_path / 'l.jsonl'))
    s = Settings()
    assert s.source == path and s.port == 9100
    assert s.ledger_path() == tmp_path / 'l.jsonl'


def test_bad_config(tmp_path, monkeypatch):
    with pytest.raises(InvalidInputError):
        Settings(tmp_path / 'missing.yaml')
    with pytest.raises(InvalidInputError):
        Settings(write_config(tmp_path, '- just\n- a list\n'))
    monkeypatch.setenv('LOGTALLY_PORT', 'eighty')
    with pytest.raises(InvalidInputError):
        Settings(write_config(tmp_path / 'c', ''))


def test_relative_ledger_path_resolves_against_project(tmp_path, monkeypatch):
    monkeypatch.delenv('LOGTALLY_LEDGER', raising=False)
    path = write_config(tmp_path, 'ledger:\n  path: out/run.jsonl\n')
    assert Settings(path).ledger_path() == tmp_path / 'proj' / 'out' / 'run.jsonl'
    off = write_config(tmp_path / 'b', 'ledger:\n  enabled: false\n')
    assert Settings(off).ledger_path() is None


def test_ledger_records(isolated_ledger):
    ledger.log('count_done', source='a', count=3)
    ledger.log('eval_row', id='b', iss=0.5)
    recs = [json.loads(line) for line in isolated_ledger.read_text().splitlines()]
    assert [r['kind'] for r in recs] == ['count_done', 'eval_row']
    assert recs[0]['count'] == 3 and recs[0]['ts'].endswith('Z')


def test_disabled_ledger_writes_nothing(tmp_path):
    ledger.configure(None)
    ledger.log('count_done', count=1)
    assert ledger.current_path() is None
    assert not list(tmp_path.glob('*.jsonl'))


def test_say_goes_to_stderr(capsys):
    ledger.say('Count', 'hello')
    out, err = capsys.readouterr()
    assert out == '' and err == '[Count] hello\n'


def test_json_helpers(tmp_path):
    p = tmp_path / 'deep' / 'x.json'
    ledger.save_json(p, {'a': [1, 2]})
    assert ledger.load_json(p) == {'a': [1, 2]}
