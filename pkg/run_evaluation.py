import os
import sys
import django

# Setup Django
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'project.settings')
django.setup()

from lab.evaluation import EvaluationSuite

def main(only=None):
    print("=== Measure-data laboratory acceptance suite ===\n")

    evaluator = EvaluationSuite()
    results = evaluator.run_full_evaluation(only)

    print("\n=== Summary ===")
    for name, passed in results['summary'].items():
        status = "✓" if passed else "✗"
        print(f"  {status} {name}")

    return 0 if all(results['summary'].values()) else 1

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:] or None))
