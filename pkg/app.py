from flask import Flask, jsonify, request
import json
import logging
import os

from werkzeug.utils import secure_filename

import config
from cli import compare_protocols, parse_protocols, parse_seeds, protocol_table
from models import Protocol
from scenario_io import ScenarioError, load_scenario, parse_scenario, report_to_dict
from simulator import SimulationError, Simulator

config.setup_logging()
logger = logging.getLogger(__name__)

app = Flask(__name__)
app.config['SCENARIO_DIR'] = config.SCENARIO_DIR
app.config['MAX_CONTENT_LENGTH'] = 1 * 1024 * 1024  # 1MB max scenario document
app.config['MAX_COMPARE_RUNS'] = 60


def scenario_path(name):
    """Resolve a scenario name inside the scenario directory"""
    filename = secure_filename(name)
    if not filename.endswith('.scn'):
        filename += '.scn'
    return os.path.join(app.config['SCENARIO_DIR'], filename)


def scenario_from_request(payload):
    """Scenario from {'text': ...} or {'name': ...}; raises ScenarioError"""
    if 'text' in payload:
        scenario, diagnostics = parse_scenario(payload['text'])
        if diagnostics:
            raise ScenarioError(diagnostics)
        return scenario
    if 'name' in payload:
        return load_scenario(scenario_path(payload['name']))
    raise ValueError("request needs 'text' or 'name'")


def diagnostics_response(error):
    return jsonify({
        'error': 'invalid scenario',
        'diagnostics': [
            {'line': d.line, 'key': d.key, 'message': d.message} for d in error.diagnostics
        ],
    }), 400


@app.route('/')
def index():
    return jsonify({
        'service': 'manet-sim',
        'protocols': [p.value for p in Protocol],
        'routes': ['/scenarios', '/scenarios/<name>', '/validate', '/run', '/compare'],
    })


@app.route('/scenarios')
def list_scenarios():
    try:
        directory = app.config['SCENARIO_DIR']
        names = sorted(f[:-4] for f in os.listdir(directory) if f.endswith('.scn'))
        return jsonify({'scenarios': names})
    except OSError as e:
        return jsonify({'error': str(e)}), 500


@app.route('/scenarios/<name>')
def get_scenario(name):
    path = scenario_path(name)
    if not os.path.exists(path):
        return jsonify({'error': f"no scenario named '{name}'"}), 404
    try:
        scenario = load_scenario(path)
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
        return jsonify({
            'name': name,
            'text': text,
            'protocol': scenario.protocol.value,
            'nodes': len(scenario.nodes),
            'links': len(scenario.links),
            'flows': len(scenario.flows),
            'horizon': scenario.horizon,
        })
    except ScenarioError as e:
        return diagnostics_response(e)
    except Exception as e:
        return jsonify({'error': str(e)}), 500


@app.route('/validate', methods=['POST'])
def validate():
    text = request.get_data(as_text=True)
    if not text:
        return jsonify({'error': 'No scenario document in request body'}), 400
    _, diagnostics = parse_scenario(text)
    return jsonify({
        'valid': not diagnostics,
        'diagnostics': [{'line': d.line, 'key': d.key, 'message': d.message} for d in diagnostics],
    })


@app.route('/run', methods=['POST'])
def run_scenario():
    try:
        payload = request.get_json(silent=True) or {}
        scenario = scenario_from_request(payload)
        changes = {key: payload[key] for key in ('seed', 'protocol') if key in payload}
        if changes:
            scenario = scenario.with_params(**changes)
        report = Simulator(scenario).run()
        result = report_to_dict(report)
        if not payload.get('deliveries', False):
            result.pop('deliveries')
        return jsonify(result)
    except ScenarioError as e:
        return diagnostics_response(e)
    except (SimulationError, ValueError) as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        logger.exception('run failed')
        return jsonify({'error': str(e)}), 500


@app.route('/compare', methods=['POST'])
def compare():
    try:
        payload = request.get_json(silent=True) or {}
        scenario = scenario_from_request(payload)
        protocols = payload.get('protocols', [p.value for p in Protocol])
        protocols = parse_protocols(','.join(protocols) if isinstance(protocols, list) else protocols)
        seeds = payload.get('seeds', [scenario.seed])
        seeds = [int(seed) for seed in seeds] if isinstance(seeds, list) else parse_seeds(seeds)
        if len(protocols) * len(seeds) > app.config['MAX_COMPARE_RUNS']:
            return jsonify({'error': f"at most {app.config['MAX_COMPARE_RUNS']} runs per request"}), 400
        runs = compare_protocols(scenario, protocols, seeds)
        table = protocol_table(runs)
        return jsonify({
            'runs': json.loads(runs.to_json(orient='records')),
            'summary': json.loads(table.to_json(orient='records')),
        })
    except ScenarioError as e:
        return diagnostics_response(e)
    except (SimulationError, ValueError) as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        logger.exception('compare failed')
        return jsonify({'error': str(e)}), 500


if __name__ == '__main__':
    app.run(debug=True, host='0.0.0.0', port=5000)
